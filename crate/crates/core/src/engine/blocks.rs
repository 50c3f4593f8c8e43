//! Decomposition of the z axis into blocks, remainders and common regions.

use std::fmt;

use crate::field::{GridSpec, PlaneRange};

use super::EngineError;

/// Identifies one separately stored region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionId {
    Remainder(usize),
    Common(usize),
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionId::Remainder(i) => write!(f, "R{i}"),
            RegionId::Common(i) => write!(f, "C{i}"),
        }
    }
}

/// `D` blocks of `P` planes with halo depth `h = radius * t_b`.
///
/// Remainder `R_i = [iP + h, (i+1)P - h)` belongs to block `i` alone (the
/// first and last also own the top and bottom padding). Common region
/// `C_i = [(i+1)P - h, (i+1)P + h)` straddles the boundary between blocks
/// `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMap {
    spec: GridSpec,
    divisions: usize,
    temporal_steps: usize,
    plane_depth: usize,
    halo_depth: usize,
}

pub fn build_block_map(spec: GridSpec, divisions: usize, temporal_steps: usize) -> Result<BlockMap, EngineError> {
    spec.validate()?;
    if divisions == 0 || temporal_steps == 0 {
        return Err(EngineError::Decomposition("divisions and temporal steps must be positive".into()));
    }
    if spec.nz % divisions != 0 {
        return Err(EngineError::Decomposition(format!(
            "nz ({}) is not divisible by D ({divisions})",
            spec.nz
        )));
    }
    let plane_depth = spec.nz / divisions;
    let halo_depth = spec.radius * temporal_steps;
    if plane_depth < 2 * halo_depth {
        return Err(EngineError::Decomposition(format!(
            "nz/D ({plane_depth}) < 2·radius·t_b ({})",
            2 * halo_depth
        )));
    }
    Ok(BlockMap { spec, divisions, temporal_steps, plane_depth, halo_depth })
}

impl BlockMap {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    pub fn temporal_steps(&self) -> usize {
        self.temporal_steps
    }

    pub fn plane_depth(&self) -> usize {
        self.plane_depth
    }

    pub fn halo_depth(&self) -> usize {
        self.halo_depth
    }

    /// Interior planes owned by block `i`.
    pub fn block(&self, i: usize) -> PlaneRange {
        let p = self.plane_depth as isize;
        PlaneRange::new(i as isize * p, (i as isize + 1) * p)
    }

    pub fn remainder(&self, i: usize) -> PlaneRange {
        assert!(i < self.divisions);
        let full = self.spec.full_range();
        let b = self.block(i);
        let h = self.halo_depth as isize;
        let top = if i == 0 { full.z_begin } else { b.z_begin + h };
        let bottom = if i + 1 == self.divisions { full.z_end } else { b.z_end - h };
        PlaneRange::new(top, bottom)
    }

    pub fn common(&self, i: usize) -> PlaneRange {
        assert!(i + 1 < self.divisions);
        let edge = self.block(i).z_end;
        let h = self.halo_depth as isize;
        PlaneRange::new(edge - h, edge + h)
    }

    pub fn region(&self, id: RegionId) -> PlaneRange {
        match id {
            RegionId::Remainder(i) => self.remainder(i),
            RegionId::Common(i) => self.common(i),
        }
    }

    /// Every region in storage order: `R_0, C_0, R_1, C_1, ..., R_{D-1}`.
    pub fn regions(&self) -> Vec<RegionId> {
        let mut out = Vec::with_capacity(2 * self.divisions - 1);
        for i in 0..self.divisions {
            out.push(RegionId::Remainder(i));
            if i + 1 < self.divisions {
                out.push(RegionId::Common(i));
            }
        }
        out
    }

    /// Regions transferred to the fast tier for block `i`: `R_i` and `C_i`.
    /// `C_{i-1}` is already resident from the previous block.
    pub fn uploads(&self, i: usize) -> Vec<RegionId> {
        let mut out = vec![RegionId::Remainder(i)];
        if i + 1 < self.divisions {
            out.push(RegionId::Common(i));
        }
        out
    }

    /// Regions written back after block `i`: `R_i` and the now complete
    /// `C_{i-1}`.
    pub fn downloads(&self, i: usize) -> Vec<RegionId> {
        let mut out = vec![RegionId::Remainder(i)];
        if i > 0 {
            out.push(RegionId::Common(i - 1));
        }
        out
    }

    /// Working slab of block `i`: `C_{i-1} ∪ R_i ∪ C_i`, i.e. the block
    /// extended by `h` planes and clipped to the padded grid.
    pub fn working_slab(&self, i: usize) -> PlaneRange {
        let b = self.block(i);
        let h = self.halo_depth as isize;
        PlaneRange::new(b.z_begin - h, b.z_end + h).intersect(&self.spec.full_range())
    }

    pub fn max_slab_planes(&self) -> usize {
        (0..self.divisions).map(|i| self.working_slab(i).len()).max().unwrap_or(0)
    }

    /// Planes of all remainders plus all common regions (every padded plane
    /// once).
    pub fn shared_transfer_planes(&self) -> usize {
        self.regions().iter().map(|&id| self.region(id).len()).sum()
    }
}

impl fmt::Display for BlockMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.spec;
        writeln!(
            f,
            "grid {}x{}x{} radius {}: D={} P={} t_b={} h={}",
            s.nx, s.ny, s.nz, s.radius, self.divisions, self.plane_depth, self.temporal_steps, self.halo_depth
        )?;
        for i in 0..self.divisions {
            write!(f, "  block {i}: planes {} slab {} R{i} {}", self.block(i), self.working_slab(i), self.remainder(i))?;
            if i + 1 < self.divisions {
                write!(f, " C{i} {}", self.common(i))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(nz: usize, d: usize, tb: usize) -> Result<BlockMap, EngineError> {
        build_block_map(GridSpec::new(8, 8, nz, 4).unwrap(), d, tb)
    }

    #[test]
    fn large_configuration_depths() {
        let m = map(1152, 8, 12).unwrap();
        assert_eq!((m.plane_depth(), m.halo_depth()), (144, 48));
        for i in 1..7 {
            assert_eq!(m.remainder(i).len(), 48);
        }
        for i in 0..7 {
            assert_eq!(m.common(i).len(), 96);
        }
    }

    #[test]
    fn desk_configuration_depths() {
        let m = map(144, 4, 3).unwrap();
        assert_eq!((m.plane_depth(), m.halo_depth()), (36, 12));
        assert_eq!(m.common(0), PlaneRange::new(24, 48));
        assert_eq!(m.remainder(0), PlaneRange::new(-4, 24));
        assert_eq!(m.remainder(3), PlaneRange::new(120, 148));
        assert_eq!(m.working_slab(1), PlaneRange::new(24, 84));
    }

    #[test]
    fn halo_too_deep_is_rejected() {
        let err = map(144, 4, 5).unwrap_err();
        assert!(err.to_string().contains("nz/D (36) < 2·radius·t_b (40)"), "{err}");
        assert!(map(100, 3, 1).is_err());
    }

    #[test]
    fn single_block_owns_everything() {
        let m = map(16, 1, 2).unwrap();
        assert!(map(16, 1, 3).is_err());
        assert_eq!(m.regions(), vec![RegionId::Remainder(0)]);
        assert_eq!(m.remainder(0), PlaneRange::new(-4, 20));
        assert_eq!(m.working_slab(0), m.remainder(0));
    }

    proptest! {
        #[test]
        fn regions_partition_the_padded_grid(d in 1usize..7, tb in 1usize..4, extra in 0usize..3) {
            let h = 4 * tb;
            let nz = d * (2 * h + 4 * extra).max(1);
            let m = map(nz, d, tb).unwrap();
            let full = m.spec().full_range();
            let mut owners = vec![0u32; full.len()];
            for id in m.regions() {
                for z in m.region(id).planes() {
                    owners[(z - full.z_begin) as usize] += 1;
                }
            }
            prop_assert!(owners.iter().all(|&c| c == 1));
            prop_assert_eq!(m.shared_transfer_planes(), full.len());
            for i in 0..d {
                let mut parts = vec![m.remainder(i)];
                if i > 0 { parts.insert(0, m.common(i - 1)); }
                if i + 1 < d { parts.push(m.common(i)); }
                let span = PlaneRange::new(parts[0].z_begin, parts.last().unwrap().z_end);
                prop_assert_eq!(span, m.working_slab(i));
                prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), span.len());
            }
        }
    }
}
