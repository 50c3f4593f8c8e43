//! Padded 3D grids, plane ranges along the decomposition axis and field
//! initialization.
//!
//! Storage is row-major with x fastest and z slowest, so any run of whole
//! z planes is one contiguous span. Plane indices are global: plane 0 is the
//! first interior plane and planes `-radius..0` / `nz..nz+radius` are the
//! zero-valued padding that implements the Dirichlet boundary.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("padded extent {0:?} overflows the addressable index space")]
    ExtentOverflow([usize; 3]),
    #[error("plane range {range} outside [{lo}, {hi})")]
    RangeOutOfBounds { range: PlaneRange, lo: isize, hi: isize },
    #[error("plane ranges differ in length: {0} vs {1}")]
    LengthMismatch(PlaneRange, PlaneRange),
    #[error("volumes differ in x/y extent")]
    ExtentMismatch,
}

/// Interior extent of the grid plus the stencil halo radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub radius: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, radius: usize) -> Result<Self, FieldError> {
        let spec = Self { nx, ny, nz, radius };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cube(n: usize, radius: usize) -> Result<Self, FieldError> {
        Self::new(n, n, n, radius)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(FieldError::InvalidGrid(format!(
                "interior extent must be >= 1 per axis, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if self.radius == 0 {
            return Err(FieldError::InvalidGrid("radius must be >= 1".into()));
        }
        self.checked_len()?;
        Ok(())
    }

    /// Padded extent `[x, y, z]`.
    pub fn padded(&self) -> [usize; 3] {
        let p = 2 * self.radius;
        [self.nx + p, self.ny + p, self.nz + p]
    }

    fn checked_len(&self) -> Result<usize, FieldError> {
        let pad = self.radius.checked_mul(2);
        let ext = [self.nx, self.ny, self.nz].map(|n| pad.and_then(|p| n.checked_add(p)));
        let overflow = || FieldError::ExtentOverflow([self.nx, self.ny, self.nz]);
        let [x, y, z] = [ext[0].ok_or_else(overflow)?, ext[1].ok_or_else(overflow)?, ext[2].ok_or_else(overflow)?];
        x.checked_mul(y)
            .and_then(|xy| xy.checked_mul(z))
            .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()).map(|_| n))
            .filter(|&n| n <= isize::MAX as usize / 8)
            .ok_or_else(overflow)
    }

    /// Values per padded z plane.
    pub fn plane_len(&self) -> usize {
        let [x, y, _] = self.padded();
        x * y
    }

    pub fn plane_bytes(&self) -> usize {
        self.plane_len() * std::mem::size_of::<f64>()
    }

    /// Total padded value count.
    pub fn padded_len(&self) -> usize {
        self.plane_len() * self.padded()[2]
    }

    /// Every plane of the padded grid.
    pub fn full_range(&self) -> PlaneRange {
        PlaneRange {
            z_begin: -(self.radius as isize),
            z_end: (self.nz + self.radius) as isize,
        }
    }

    /// Interior planes only.
    pub fn interior_range(&self) -> PlaneRange {
        PlaneRange { z_begin: 0, z_end: self.nz as isize }
    }

    pub fn same_xy(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.radius == other.radius
    }

    /// Offset of padded-plane-local point `(x, y)` where `x, y` are interior
    /// coordinates (0 = first interior cell).
    #[inline]
    pub fn xy_offset(&self, x: usize, y: usize) -> usize {
        let px = self.nx + 2 * self.radius;
        (y + self.radius) * px + x + self.radius
    }
}

/// Half-open range of global z planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlaneRange {
    pub z_begin: isize,
    pub z_end: isize,
}

impl PlaneRange {
    pub fn new(z_begin: isize, z_end: isize) -> Self {
        Self { z_begin, z_end }
    }

    pub fn len(&self) -> usize {
        (self.z_end - self.z_begin).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.z_end <= self.z_begin
    }

    pub fn contains(&self, other: &PlaneRange) -> bool {
        other.z_begin >= self.z_begin && other.z_end <= self.z_end
    }

    pub fn contains_plane(&self, z: isize) -> bool {
        z >= self.z_begin && z < self.z_end
    }

    pub fn intersect(&self, other: &PlaneRange) -> PlaneRange {
        PlaneRange {
            z_begin: self.z_begin.max(other.z_begin),
            z_end: self.z_end.min(other.z_end),
        }
    }

    pub fn planes(&self) -> std::ops::Range<isize> {
        self.z_begin..self.z_end
    }
}

impl fmt::Display for PlaneRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.z_begin, self.z_end)
    }
}

/// Deterministic initial conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zero,
    /// `amplitude * exp(-|p - center|^2 / (2 width^2))`, coordinates in
    /// interior cell units.
    GaussianPulse { center: [f64; 3], width: f64, amplitude: f64 },
    /// Product of `sin(pi f (i + 1) / (n + 1))` per axis; vanishes on the
    /// padding so it is compatible with the Dirichlet boundary.
    SmoothSinusoid { frequencies: [f64; 3] },
}

impl InitKind {
    /// Gaussian pulse on the cell at `n / 2` along each axis.
    pub fn centered_pulse(spec: &GridSpec, width: f64, amplitude: f64) -> Self {
        InitKind::GaussianPulse {
            center: [(spec.nx / 2) as f64, (spec.ny / 2) as f64, (spec.nz / 2) as f64],
            width,
            amplitude,
        }
    }

    /// Value at interior cell `(i, j, k)`.
    pub fn eval(&self, spec: &GridSpec, i: usize, j: usize, k: usize) -> f64 {
        match *self {
            InitKind::Zero => 0.0,
            InitKind::GaussianPulse { center, width, amplitude } => {
                let dx = i as f64 - center[0];
                let dy = j as f64 - center[1];
                let dz = k as f64 - center[2];
                amplitude * (-(dx * dx + dy * dy + dz * dz) / (2.0 * width * width)).exp()
            }
            InitKind::SmoothSinusoid { frequencies: [fx, fy, fz] } => {
                let s = |f: f64, idx: usize, n: usize| (PI * f * (idx + 1) as f64 / (n + 1) as f64).sin();
                s(fx, i, spec.nx) * s(fy, j, spec.ny) * s(fz, k, spec.nz)
            }
        }
    }
}

/// A run of whole padded z planes of a grid. A full volume covers
/// `spec.full_range()`; working slabs cover a window of it.
#[derive(Clone, PartialEq)]
pub struct Volume {
    spec: GridSpec,
    range: PlaneRange,
    values: Vec<f64>,
}

impl fmt::Debug for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Volume")
            .field("spec", &self.spec)
            .field("range", &self.range)
            .finish_non_exhaustive()
    }
}

impl Volume {
    /// Zero-filled full volume.
    pub fn zeros(spec: GridSpec) -> Result<Self, FieldError> {
        spec.validate()?;
        Ok(Self { spec, range: spec.full_range(), values: vec![0.0; spec.padded_len()] })
    }

    /// Zero-filled window covering `range`.
    pub fn slab(spec: GridSpec, range: PlaneRange) -> Result<Self, FieldError> {
        spec.validate()?;
        let full = spec.full_range();
        if range.is_empty() || !full.contains(&range) {
            return Err(FieldError::RangeOutOfBounds { range, lo: full.z_begin, hi: full.z_end });
        }
        Ok(Self { spec, range, values: vec![0.0; range.len() * spec.plane_len()] })
    }

    /// Window over `range` whose allocation can hold `max_planes` planes, so
    /// that [`Volume::retarget`] never reallocates up to that depth.
    pub fn slab_with_capacity(spec: GridSpec, range: PlaneRange, max_planes: usize) -> Result<Self, FieldError> {
        let mut v = Self::slab(spec, range)?;
        v.values.reserve_exact(max_planes.saturating_sub(range.len()) * spec.plane_len());
        Ok(v)
    }

    /// Moves the window to `range`. Contents are unspecified afterwards.
    pub fn retarget(&mut self, range: PlaneRange) -> Result<(), FieldError> {
        let full = self.spec.full_range();
        if range.is_empty() || !full.contains(&range) {
            return Err(FieldError::RangeOutOfBounds { range, lo: full.z_begin, hi: full.z_end });
        }
        self.values.resize(range.len() * self.spec.plane_len(), 0.0);
        self.range = range;
        Ok(())
    }

    /// Bytes held by the allocation.
    pub fn capacity_bytes(&self) -> usize {
        self.values.capacity() * std::mem::size_of::<f64>()
    }

    /// Fills every padded point with `value`.
    pub fn filled(spec: GridSpec, value: f64) -> Result<Self, FieldError> {
        let mut v = Self::zeros(spec)?;
        v.values.fill(value);
        Ok(v)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn range(&self) -> PlaneRange {
        self.range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn check_range(&self, range: PlaneRange) -> Result<(), FieldError> {
        if range.is_empty() || !self.range.contains(&range) {
            return Err(FieldError::RangeOutOfBounds {
                range,
                lo: self.range.z_begin,
                hi: self.range.z_end,
            });
        }
        Ok(())
    }

    fn span(&self, range: PlaneRange) -> std::ops::Range<usize> {
        let pl = self.spec.plane_len();
        let a = (range.z_begin - self.range.z_begin) as usize * pl;
        a..a + range.len() * pl
    }

    /// Contiguous values of the given planes.
    pub fn planes(&self, range: PlaneRange) -> Result<&[f64], FieldError> {
        self.check_range(range)?;
        Ok(&self.values[self.span(range)])
    }

    pub fn planes_mut(&mut self, range: PlaneRange) -> Result<&mut [f64], FieldError> {
        self.check_range(range)?;
        let span = self.span(range);
        Ok(&mut self.values[span])
    }

    /// Index of interior cell `(x, y)` on global plane `z`, which must lie in
    /// this volume's range.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: isize) -> usize {
        debug_assert!(self.range.contains_plane(z));
        (z - self.range.z_begin) as usize * self.spec.plane_len() + self.spec.xy_offset(x, y)
    }

    pub fn get(&self, x: usize, y: usize, z: isize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: isize, value: f64) {
        let i = self.index(x, y, z);
        self.values[i] = value;
    }

    /// Zeroes every padding point inside this volume's range: whole padding
    /// planes plus the x/y border of interior planes.
    pub fn apply_dirichlet(&mut self) {
        let spec = self.spec;
        let [px, py, _] = spec.padded();
        let r = spec.radius;
        let pl = spec.plane_len();
        for (p, z) in self.range.planes().enumerate() {
            let plane = &mut self.values[p * pl..(p + 1) * pl];
            if z < 0 || z >= spec.nz as isize {
                plane.fill(0.0);
                continue;
            }
            plane[..r * px].fill(0.0);
            plane[(py - r) * px..].fill(0.0);
            for y in r..py - r {
                let row = &mut plane[y * px..(y + 1) * px];
                row[..r].fill(0.0);
                row[px - r..].fill(0.0);
            }
        }
    }

    /// True if every value is finite.
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Builds a full padded volume with padding planes set to zero.
pub fn make_volume(spec: GridSpec, init: InitKind) -> Result<Volume, FieldError> {
    let mut v = Volume::zeros(spec)?;
    if init == InitKind::Zero {
        return Ok(v);
    }
    for k in 0..spec.nz {
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                v.set(i, j, k as isize, init.eval(&spec, i, j, k));
            }
        }
    }
    Ok(v)
}

/// Copies `src_range` of `src` onto `dst_range` of `dst` bit for bit.
pub fn copy_planes(
    src: &Volume,
    src_range: PlaneRange,
    dst: &mut Volume,
    dst_range: PlaneRange,
) -> Result<(), FieldError> {
    if src_range.len() != dst_range.len() {
        return Err(FieldError::LengthMismatch(src_range, dst_range));
    }
    if !src.spec.same_xy(&dst.spec) {
        return Err(FieldError::ExtentMismatch);
    }
    let from = src.planes(src_range)?;
    dst.planes_mut(dst_range)?.copy_from_slice(from);
    Ok(())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian bytes of each value's bit pattern.
pub fn checksum_values(values: &[f64]) -> u64 {
    let mut h = FNV_OFFSET;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Order-sensitive digest of the raw bits of `range`.
pub fn checksum_planes(v: &Volume, range: PlaneRange) -> Result<u64, FieldError> {
    Ok(checksum_values(v.planes(range)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec8() -> GridSpec {
        GridSpec::cube(8, 4).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(0, 4, 4, 1).is_err());
        assert!(GridSpec::new(4, 4, 4, 0).is_err());
        assert!(matches!(
            GridSpec::new(usize::MAX / 2, 4, 4, 1),
            Err(FieldError::ExtentOverflow(_))
        ));
    }

    #[test]
    fn zero_volume_has_padded_length() {
        let v = make_volume(spec8(), InitKind::Zero).unwrap();
        assert_eq!(v.values().len(), 16 * 16 * 16);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pulse_peaks_at_center_and_is_symmetric() {
        let spec = spec8();
        let init = InitKind::centered_pulse(&spec, 2.0, 1.0);
        let v = make_volume(spec, init).unwrap();
        assert_eq!(v.get(4, 4, 4), 1.0);
        for d in 1..=3usize {
            let plus = v.get(4 + d, 4, 4);
            assert_eq!(plus.to_bits(), v.get(4 - d, 4, 4).to_bits());
            assert_eq!(plus.to_bits(), v.get(4, 4 + d, 4).to_bits());
            assert_eq!(plus.to_bits(), v.get(4, 4, 4 - d as isize).to_bits());
            assert!(plus < 1.0);
        }
        // padding stays zero
        let pad = v.planes(PlaneRange::new(-4, 0)).unwrap();
        assert!(pad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sinusoid_matches_scalar_reevaluation() {
        let spec = GridSpec::cube(16, 4).unwrap();
        let v = make_volume(spec, InitKind::SmoothSinusoid { frequencies: [1.0, 1.0, 1.0] }).unwrap();
        let n = 16.0_f64;
        for (i, j, k) in [(0usize, 0usize, 0usize), (3, 7, 11), (15, 15, 15), (8, 2, 9)] {
            let expect = (PI * (i as f64 + 1.0) / (n + 1.0)).sin()
                * (PI * (j as f64 + 1.0) / (n + 1.0)).sin()
                * (PI * (k as f64 + 1.0) / (n + 1.0)).sin();
            assert_eq!(v.get(i, j, k as isize), expect);
        }
    }

    #[test]
    fn construction_is_reproducible() {
        let spec = GridSpec::new(9, 7, 12, 2).unwrap();
        let a = make_volume(spec, InitKind::centered_pulse(&spec, 1.5, 3.0)).unwrap();
        let b = make_volume(spec, InitKind::centered_pulse(&spec, 1.5, 3.0)).unwrap();
        assert_eq!(checksum_planes(&a, spec.full_range()), checksum_planes(&b, spec.full_range()));
    }

    #[test]
    fn copy_identity_and_involution() {
        let spec = spec8();
        let a = make_volume(spec, InitKind::SmoothSinusoid { frequencies: [1.0, 2.0, 3.0] }).unwrap();
        let mut b = a.clone();
        let r = PlaneRange::new(0, 4);
        copy_planes(&a, r, &mut b, r).unwrap();
        assert_eq!(a, b);

        let mut c = a.clone();
        let (r1, r2) = (PlaneRange::new(0, 3), PlaneRange::new(5, 8));
        let saved = Volume::slab(spec, r2).map(|mut s| {
            copy_planes(&c, r2, &mut s, r2).unwrap();
            s
        });
        let saved = saved.unwrap();
        copy_planes(&a, r1, &mut c, r2).unwrap();
        copy_planes(&saved, r2, &mut c, r2).unwrap();
        assert_eq!(checksum_planes(&a, spec.full_range()), checksum_planes(&c, spec.full_range()));
    }

    #[test]
    fn copying_zeros_touches_only_target_planes() {
        let spec = spec8();
        let zero = make_volume(spec, InitKind::Zero).unwrap();
        let mut v = make_volume(spec, InitKind::SmoothSinusoid { frequencies: [1.0, 1.0, 1.0] }).unwrap();
        let other = PlaneRange::new(4, 12);
        let before = checksum_planes(&v, other).unwrap();
        let target = PlaneRange::new(0, 4);
        copy_planes(&zero, target, &mut v, target).unwrap();
        assert!(v.planes(target).unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(checksum_planes(&v, other).unwrap(), before);
    }

    #[test]
    fn copy_rejects_mismatches() {
        let spec = spec8();
        let a = Volume::zeros(spec).unwrap();
        let mut b = Volume::zeros(GridSpec::new(4, 8, 8, 4).unwrap()).unwrap();
        let r = PlaneRange::new(0, 2);
        assert_eq!(copy_planes(&a, r, &mut b, r), Err(FieldError::ExtentMismatch));
        let mut c = a.clone();
        assert!(matches!(
            copy_planes(&a, r, &mut c, PlaneRange::new(0, 3)),
            Err(FieldError::LengthMismatch(..))
        ));
        assert!(matches!(
            copy_planes(&a, PlaneRange::new(10, 13), &mut c, PlaneRange::new(0, 3)),
            Err(FieldError::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn checksum_properties() {
        let spec = spec8();
        let mut v = make_volume(spec, InitKind::SmoothSinusoid { frequencies: [1.0, 1.0, 1.0] }).unwrap();
        let full = spec.full_range();
        let d0 = checksum_planes(&v, full).unwrap();
        assert_eq!(d0, checksum_planes(&v, full).unwrap());
        let x = v.get(3, 3, 3);
        v.set(3, 3, 3, -x);
        assert_ne!(d0, checksum_planes(&v, full).unwrap());

        let z = Volume::zeros(spec).unwrap();
        assert_eq!(
            checksum_planes(&z, PlaneRange::new(-4, 0)).unwrap(),
            checksum_planes(&z, PlaneRange::new(2, 6)).unwrap()
        );
        assert!(checksum_planes(&z, PlaneRange::new(3, 3)).is_err());
    }

    #[test]
    fn dirichlet_clears_padding_only() {
        let spec = GridSpec::new(3, 2, 2, 1).unwrap();
        let mut v = Volume::filled(spec, 7.0).unwrap();
        v.apply_dirichlet();
        let nonzero = v.values().iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nonzero, 3 * 2 * 2);
        assert_eq!(v.get(2, 1, 1), 7.0);
    }
}
