//! 25-point acoustic wave stencil: in-core reference stepping and temporally
//! blocked compute on a working slab.
//!
//! The update is the standard leapfrog scheme
//! `u_next = 2 u_curr - u_prev + v^2 dt^2 lap(u_curr)` with an 8th-order
//! central Laplacian (one center tap plus four offsets per direction on each
//! axis). Only interior points are updated, so the zero padding stays zero.

use thiserror::Error;

use crate::field::{FieldError, GridSpec, PlaneRange, Volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("CFL violated: courant number {courant:.4} exceeds limit {limit:.4}")]
    Cfl { courant: f64, limit: f64 },
    #[error("non-finite value after update on plane {plane}")]
    NonFinite { plane: isize },
    #[error("slab has {planes} planes, temporal block needs at least {required}")]
    SlabTooThin { planes: usize, required: usize },
    #[error("state volumes disagree on grid or plane range")]
    Mismatch,
    #[error("invalid medium: {0}")]
    Medium(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Neighbour rows at distances 1..=4 on one side.
type Rows<'a> = [&'a [f64]; 4];

/// Second-derivative weights shared by all three axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilCoeffs {
    pub center: f64,
    pub axial: [f64; 4],
}

impl StencilCoeffs {
    /// Sufficient leapfrog stability bound on `v dt / dx`: the Laplacian
    /// symbol is bounded by `3 (|c0| + 2 sum |ck|) / dx^2`.
    pub fn cfl_limit(&self) -> f64 {
        let norm = self.center.abs() + 2.0 * self.axial.iter().map(|c| c.abs()).sum::<f64>();
        2.0 / (3.0 * norm).sqrt()
    }
}

/// Unique 8th-order central-difference coefficients for `d2/dx2`.
pub fn laplacian_coeffs_8th() -> StencilCoeffs {
    StencilCoeffs {
        center: -205.0 / 72.0,
        axial: [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
    }
}

/// The read-only dataset plus the scalar discretization parameters.
#[derive(Debug, Clone)]
pub struct MediumParams {
    pub velocity: Volume,
    pub dt: f64,
    pub dx: f64,
}

impl MediumParams {
    /// Validates positivity and the CFL condition against `coeffs`.
    pub fn new(velocity: Volume, dt: f64, dx: f64, coeffs: &StencilCoeffs) -> Result<Self, KernelError> {
        if !(dt > 0.0 && dx > 0.0 && dt.is_finite() && dx.is_finite()) {
            return Err(KernelError::Medium(format!("dt ({dt}) and dx ({dx}) must be positive")));
        }
        let vmax = max_velocity(&velocity)?;
        check_cfl(vmax, dt, dx, coeffs)?;
        Ok(Self { velocity, dt, dx })
    }

    pub fn propagator(&self, coeffs: StencilCoeffs) -> Propagator {
        Propagator::new(coeffs, self.dt, self.dx)
    }
}

pub fn max_velocity(velocity: &Volume) -> Result<f64, KernelError> {
    let mut vmax = 0.0f64;
    for &v in velocity.values() {
        if !v.is_finite() || v < 0.0 {
            return Err(KernelError::Medium(format!("velocity {v} is not a finite non-negative value")));
        }
        vmax = vmax.max(v);
    }
    Ok(vmax)
}

pub fn check_cfl(vmax: f64, dt: f64, dx: f64, coeffs: &StencilCoeffs) -> Result<(), KernelError> {
    let courant = vmax * dt / dx;
    let limit = coeffs.cfl_limit();
    if courant > limit {
        return Err(KernelError::Cfl { courant, limit });
    }
    Ok(())
}

/// Velocity model used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Medium {
    Constant(f64),
    /// `upper` above global plane `interface`, `lower` from it downward,
    /// each scaled by `1 + ripple * sin(2 pi x / 37) sin(2 pi y / 29) sin(2 pi z / 31)`
    /// (interior cell coordinates). A nonzero ripple gives the read-only
    /// dataset texture a fixed-rate coder cannot store exactly.
    TwoLayer { upper: f64, lower: f64, interface: isize, ripple: f64 },
}

const RIPPLE_WAVELENGTHS: [f64; 3] = [37.0, 29.0, 31.0];

impl Medium {
    pub fn max(&self) -> f64 {
        match *self {
            Medium::Constant(v) => v,
            Medium::TwoLayer { upper, lower, ripple, .. } => upper.max(lower) * (1.0 + ripple.abs()),
        }
    }

    /// Velocity over the full padded grid (padding included).
    pub fn build(&self, spec: GridSpec) -> Result<Volume, FieldError> {
        match *self {
            Medium::Constant(v) => Volume::filled(spec, v),
            Medium::TwoLayer { upper, lower, interface, ripple } => {
                let mut vol = Volume::filled(spec, upper)?;
                let lo = PlaneRange::new(interface.max(-(spec.radius as isize)), spec.full_range().z_end);
                if !lo.is_empty() {
                    vol.planes_mut(lo)?.fill(lower);
                }
                if ripple != 0.0 {
                    let wave = |c: usize, l: f64| (2.0 * std::f64::consts::PI * c as f64 / l).sin();
                    for z in 0..spec.nz {
                        let sz = wave(z, RIPPLE_WAVELENGTHS[2]);
                        for y in 0..spec.ny {
                            let syz = wave(y, RIPPLE_WAVELENGTHS[1]) * sz;
                            for x in 0..spec.nx {
                                let i = vol.index(x, y, z as isize);
                                let v = &mut vol.values_mut()[i];
                                *v *= 1.0 + ripple * wave(x, RIPPLE_WAVELENGTHS[0]) * syz;
                            }
                        }
                    }
                }
                Ok(vol)
            }
        }
    }
}

/// Two read-write time levels plus the write-only Laplacian scratch.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub u_prev: Volume,
    pub u_curr: Volume,
    pub scratch: Volume,
}

impl WaveState {
    /// State with both time levels equal (zero initial velocity).
    pub fn at_rest(initial: Volume) -> Result<Self, KernelError> {
        let scratch = Volume::slab(*initial.spec(), initial.range())?;
        Ok(Self { u_prev: initial.clone(), u_curr: initial, scratch })
    }

    pub fn range(&self) -> PlaneRange {
        self.u_curr.range()
    }

    fn check(&self, velocity: &Volume) -> Result<(), KernelError> {
        let spec = self.u_curr.spec();
        let r = self.u_curr.range();
        for v in [&self.u_prev, &self.scratch, velocity] {
            if v.spec() != spec || v.range() != r {
                return Err(KernelError::Mismatch);
            }
        }
        Ok(())
    }

    fn rotate(&mut self) {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
    }
}

/// Precomputed scalar factors for one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    pub coeffs: StencilCoeffs,
    pub dt: f64,
    pub dx: f64,
    dt2: f64,
    inv_dx2: f64,
}

impl Propagator {
    pub fn new(coeffs: StencilCoeffs, dt: f64, dx: f64) -> Self {
        Self { coeffs, dt, dx, dt2: dt * dt, inv_dx2: 1.0 / (dx * dx) }
    }

    /// Updates interior points of `planes`: `scratch = lap(u_curr)` and
    /// `u_prev <- 2 u_curr - u_prev + v^2 dt^2 scratch`. All volumes must
    /// share one plane range that covers `planes` plus `radius` on each side
    /// (padding counts).
    fn update_planes(&self, state: &mut WaveState, velocity: &Volume, planes: PlaneRange) -> Result<(), KernelError> {
        let spec = *state.u_curr.spec();
        debug_assert_eq!(spec.radius, 4);
        let window = state.range();
        let px = spec.nx + 2 * spec.radius;
        let pl = spec.plane_len();
        let c0x3 = 3.0 * self.coeffs.center;
        let [c1, c2, c3, c4] = self.coeffs.axial;
        let (dt2, inv_dx2) = (self.dt2, self.inv_dx2);

        let uc = state.u_curr.values();
        let up = state.u_prev.values_mut();
        let sc = state.scratch.values_mut();
        let vel = velocity.values();
        let mut bad = None;
        for z in planes.planes() {
            let zoff = (z - window.z_begin) as usize * pl;
            let mut finite = true;
            for y in 0..spec.ny {
                let base = zoff + spec.xy_offset(0, y);
                let span = base..base + spec.nx;
                let (up, sc, vel) = (&mut up[span.clone()], &mut sc[span.clone()], &vel[span]);
                // neighbour rows at distance k along y and z
                let row = |off: isize| {
                    let s = (base as isize + off) as usize;
                    &uc[s..s + spec.nx]
                };
                let xs = &uc[base - 4..base + spec.nx + 4];
                let (ym, yp, zm, zp): (Rows, Rows, Rows, Rows) = (
                    std::array::from_fn(|k| row(-(((k + 1) * px) as isize))),
                    std::array::from_fn(|k| row(((k + 1) * px) as isize)),
                    std::array::from_fn(|k| row(-(((k + 1) * pl) as isize))),
                    std::array::from_fn(|k| row(((k + 1) * pl) as isize)),
                );
                for x in 0..spec.nx {
                    let c = xs[x + 4];
                    let mut acc = c0x3 * c;
                    acc += c1 * ((xs[x + 3] + xs[x + 5]) + (ym[0][x] + yp[0][x]) + (zm[0][x] + zp[0][x]));
                    acc += c2 * ((xs[x + 2] + xs[x + 6]) + (ym[1][x] + yp[1][x]) + (zm[1][x] + zp[1][x]));
                    acc += c3 * ((xs[x + 1] + xs[x + 7]) + (ym[2][x] + yp[2][x]) + (zm[2][x] + zp[2][x]));
                    acc += c4 * ((xs[x] + xs[x + 8]) + (ym[3][x] + yp[3][x]) + (zm[3][x] + zp[3][x]));
                    let lap = acc * inv_dx2;
                    sc[x] = lap;
                    let v = vel[x];
                    let next = 2.0 * c - up[x] + (v * v * dt2) * lap;
                    finite &= next.is_finite();
                    up[x] = next;
                }
            }
            if !finite && bad.is_none() {
                bad = Some(z);
            }
        }
        match bad {
            Some(plane) => Err(KernelError::NonFinite { plane }),
            None => Ok(()),
        }
    }
}

/// Advances a full-grid state by one time step.
pub fn step_in_core(state: &mut WaveState, medium: &MediumParams, coeffs: &StencilCoeffs) -> Result<(), KernelError> {
    let spec = *state.u_curr.spec();
    if spec.radius != 4 {
        return Err(KernelError::Medium("the 25-point stencil needs radius 4".into()));
    }
    state.check(&medium.velocity)?;
    if state.range() != spec.full_range() {
        return Err(KernelError::Mismatch);
    }
    medium.propagator(*coeffs).update_planes(state, &medium.velocity, spec.interior_range())?;
    state.rotate();
    Ok(())
}

/// Planes computed at step `s` (1-based) of a temporal block over `window`.
/// Edges that touch the global padding stay pinned to the interior boundary;
/// open edges recede by `radius` per step.
pub fn cone_at_step(spec: &GridSpec, window: PlaneRange, step: usize) -> PlaneRange {
    let full = spec.full_range();
    let shrink = (spec.radius * step) as isize;
    let top = if window.z_begin <= full.z_begin { 0 } else { window.z_begin + shrink };
    let bottom = if window.z_end >= full.z_end { spec.nz as isize } else { window.z_end - shrink };
    PlaneRange::new(top, bottom).intersect(&spec.interior_range())
}

/// Planes holding valid data after step `s`: the computed cone plus any
/// global padding inside the window.
pub fn valid_after_step(spec: &GridSpec, window: PlaneRange, step: usize) -> PlaneRange {
    let full = spec.full_range();
    let cone = cone_at_step(spec, window, step);
    PlaneRange::new(
        if window.z_begin <= full.z_begin { full.z_begin } else { cone.z_begin },
        if window.z_end >= full.z_end { full.z_end } else { cone.z_end },
    )
}

/// Runs `steps` time steps on a working slab. After return, the slab's
/// central planes (`valid_after_step(.., steps)`) equal the global solution;
/// everything outside is stale.
pub fn compute_temporal_block(
    state: &mut WaveState,
    velocity: &Volume,
    prop: &Propagator,
    steps: usize,
) -> Result<PlaneRange, KernelError> {
    compute_temporal_block_with(state, velocity, prop, steps, |_, _, _| {})
}

/// As [`compute_temporal_block`], calling `after_step(s, valid, state)` after
/// each step with the planes still valid.
pub fn compute_temporal_block_with<F>(
    state: &mut WaveState,
    velocity: &Volume,
    prop: &Propagator,
    steps: usize,
    mut after_step: F,
) -> Result<PlaneRange, KernelError>
where
    F: FnMut(usize, PlaneRange, &mut WaveState),
{
    state.check(velocity)?;
    let spec = *state.u_curr.spec();
    if spec.radius != 4 {
        return Err(KernelError::Medium("the 25-point stencil needs radius 4".into()));
    }
    let window = state.range();
    let full = spec.full_range();
    let halo = spec.radius * steps;
    let open = (window.z_begin > full.z_begin) as usize + (window.z_end < full.z_end) as usize;
    let required = open * halo + 1;
    if window.len() < required {
        return Err(KernelError::SlabTooThin { planes: window.len(), required });
    }
    let mut valid = window;
    for s in 1..=steps {
        let cone = cone_at_step(&spec, window, s);
        prop.update_planes(state, velocity, cone)?;
        state.rotate();
        valid = valid_after_step(&spec, window, s);
        after_step(s, valid, state);
    }
    Ok(valid)
}
