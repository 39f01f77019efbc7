//! Synthetic phantoms, the support-error metric and `v_cap` sweeps.

use alloc::vec;
use alloc::vec::Vec;

use crate::admm::{solve, SolverParams, StopReason};
use crate::dictionary::{normalize_columns, ColumnNorm, KineticSpec};
use crate::error::{bail, Result};
use crate::model::{
    add_gaussian_noise, apply_forward, CoefficientMatrix, Conv2dOperator, DataMatrix, DictionaryMatrix,
    ForwardOperator, Mat, SpatialShape,
};
use crate::recovery::extract_support;

/// Relative threshold used to decide which recovered entries are active.
pub const DEFAULT_SUPPORT_RTOL: f64 = 1e-3;

/// Pixel `(r, c)` belongs to a region by its integer centre coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionShape {
    Disk { center: (f64, f64), radius: f64 },
    /// `inner < distance <= outer`.
    Annulus { center: (f64, f64), inner: f64, outer: f64 },
    /// Half-open pixel ranges `row0..row1`, `col0..col1`.
    Rectangle { row0: usize, col0: usize, row1: usize, col1: usize },
}

impl RegionShape {
    fn contains(&self, r: usize, c: usize) -> bool {
        let (r, c) = (r as f64, c as f64);
        match *self {
            RegionShape::Disk { center, radius } => dist2(center, r, c) <= radius * radius,
            RegionShape::Annulus { center, inner, outer } => {
                let d = dist2(center, r, c);
                d > inner * inner && d <= outer * outer
            }
            RegionShape::Rectangle { row0, col0, row1, col1 } => {
                r >= row0 as f64 && r < row1 as f64 && c >= col0 as f64 && c < col1 as f64
            }
        }
    }

    fn within(&self, shape: SpatialShape) -> bool {
        let (h, w) = ((shape.m1 - 1) as f64, (shape.m2 - 1) as f64);
        let round = |(cr, cc): (f64, f64), rad: f64| cr - rad >= 0.0 && cc - rad >= 0.0 && cr + rad <= h && cc + rad <= w;
        match *self {
            RegionShape::Disk { center, radius } => radius >= 0.0 && round(center, radius),
            RegionShape::Annulus { center, inner, outer } => inner >= 0.0 && outer > inner && round(center, outer),
            RegionShape::Rectangle { row0, col0, row1, col1 } => {
                row0 < row1 && col0 < col1 && row1 <= shape.m1 && col1 <= shape.m2
            }
        }
    }
}

fn dist2((cr, cc): (f64, f64), r: f64, c: f64) -> f64 {
    (r - cr) * (r - cr) + (c - cc) * (c - cc)
}

/// A region whose pixels use a single atom with a fixed coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub shape: RegionShape,
    pub basis_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub u_true: CoefficientMatrix,
    pub regions: Vec<Region>,
    /// Active atom per pixel, `None` for background.
    pub labels: Vec<Option<usize>>,
}

/// Rasterizes `regions` into an `M x atoms` coefficient matrix. Later regions
/// overwrite earlier ones on shared pixels if they use the same atom; overlaps
/// with different atoms are rejected.
pub fn make_phantom(shape: SpatialShape, atoms: usize, regions: &[Region]) -> Result<Phantom> {
    if shape.pixels() == 0 || atoms == 0 {
        bail!(Dimension, "phantom needs a nonempty image and at least one atom");
    }
    let mut u = Mat::zeros(shape.pixels(), atoms);
    let mut labels: Vec<Option<usize>> = vec![None; shape.pixels()];
    for (k, reg) in regions.iter().enumerate() {
        if reg.basis_index >= atoms {
            bail!(Dimension, "region {k} uses atom {} of {atoms}", reg.basis_index);
        }
        if !(reg.value > 0.0) || !reg.value.is_finite() {
            bail!(InvalidParameter, "region {k} needs a positive value");
        }
        if !reg.shape.within(shape) {
            bail!(InvalidParameter, "region {k} leaves the {}x{} image", shape.m1, shape.m2);
        }
        for r in 0..shape.m1 {
            for c in 0..shape.m2 {
                if !reg.shape.contains(r, c) {
                    continue;
                }
                let i = r * shape.m2 + c;
                match labels[i] {
                    Some(j) if j != reg.basis_index => {
                        bail!(InvalidParameter, "region {k} overlaps a region with atom {j} at pixel ({r}, {c})")
                    }
                    _ => {}
                }
                labels[i] = Some(reg.basis_index);
                u[(i, reg.basis_index)] = reg.value;
            }
        }
    }
    Ok(Phantom {
        u_true: CoefficientMatrix::nonnegative(u, shape)?,
        regions: regions.to_vec(),
        labels,
    })
}

/// Centred disk on atom 1 (value 0.5) inside an annulus on atom 6 (value 1.0),
/// separated by a thin gap. Sizes scale with the image: at 64x64 the disk has
/// radius 10, the gap is 2 and the annulus is 10 pixels wide.
pub fn default_regions(shape: SpatialShape) -> Vec<Region> {
    let side = shape.m1.min(shape.m2) as f64;
    let unit = side / 64.0;
    let center = ((shape.m1 as f64 - 1.0) / 2.0, (shape.m2 as f64 - 1.0) / 2.0);
    let radius = 10.0 * unit;
    let inner = radius + 2.0 * unit;
    vec![
        Region {
            shape: RegionShape::Disk { center, radius },
            basis_index: 1,
            value: 0.5,
        },
        Region {
            shape: RegionShape::Annulus {
                center,
                inner,
                outer: inner + 10.0 * unit,
            },
            basis_index: 6,
            value: 1.0,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportError {
    /// Share of pixels (in percent of all pixels) whose true atom is not recovered.
    pub percent: f64,
    /// Same, each wrong atom weighted by its index distance to the true atom.
    pub weighted_percent: f64,
    pub wrong_count: usize,
    /// Background pixels with recovered activity, reported separately.
    pub false_positive_count: usize,
    pub false_positive_percent: f64,
}

/// Compares the per-pixel argmax of `u_rec` (rows active at `rel_tol` relative
/// to the maximum) against the phantom labels. Errors are counted on the true
/// support: a foreground pixel is wrong if its recovered atom differs or it
/// was lost to background (weight 1). Background activity does not enter the
/// percentages and is reported as false positives.
pub fn support_error(u_rec: &Mat, phantom: &Phantom, rel_tol: f64) -> Result<SupportError> {
    if u_rec.shape() != phantom.u_true.values().shape() {
        bail!(
            Dimension,
            "reconstruction is {:?}, phantom is {:?}",
            u_rec.shape(),
            phantom.u_true.values().shape()
        );
    }
    let rec = extract_support(u_rec, rel_tol)?;
    let (mut wrong, mut weighted, mut fp) = (0usize, 0usize, 0usize);
    for (truth, got) in phantom.labels.iter().zip(&rec.argmax) {
        match (truth, got) {
            (Some(t), Some(g)) if t == g => {}
            (Some(t), Some(g)) => {
                wrong += 1;
                weighted += t.abs_diff(*g);
            }
            (Some(_), None) => {
                wrong += 1;
                weighted += 1;
            }
            (None, Some(_)) => fp += 1,
            (None, None) => {}
        }
    }
    let m = u_rec.nrows() as f64;
    Ok(SupportError {
        percent: 100.0 * wrong as f64 / m,
        weighted_percent: 100.0 * weighted as f64 / m,
        wrong_count: wrong,
        false_positive_count: fp,
        false_positive_percent: 100.0 * fp as f64 / m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub v_cap: f64,
    pub wrong_pixel_percent: f64,
    pub weighted_percent: f64,
    pub false_positive_percent: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Synthesizes `W = A U_true Bᵀ + noise` once and solves it for each cap in
/// `v_list` (strictly decreasing), scoring the first-pass support.
pub fn sweep_v(
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    phantom: &Phantom,
    sigma: f64,
    seed: u64,
    v_list: &[f64],
    params: &SolverParams,
) -> Result<SweepTable> {
    if v_list.is_empty() {
        bail!(InvalidParameter, "v_list must be nonempty");
    }
    if v_list.windows(2).any(|w| w[1] >= w[0]) {
        bail!(InvalidParameter, "v_list must be strictly decreasing");
    }
    let w = synthesize(a, b, phantom, sigma, seed)?;
    let mut table = SweepTable::default();
    for &v in v_list {
        let p = SolverParams { v_cap: v, ..params.clone() };
        let (u, report) = solve(a, b, &w, &p)?;
        let err = support_error(u.values(), phantom, DEFAULT_SUPPORT_RTOL)?;
        table.rows.push(SweepRow {
            v_cap: v,
            wrong_pixel_percent: err.percent,
            weighted_percent: err.weighted_percent,
            false_positive_percent: err.false_positive_percent,
            iterations: report.iterations,
            converged: report.stop_reason == StopReason::Converged,
        });
    }
    Ok(table)
}

/// Noisy data `A U_true Bᵀ + N(0, sigma^2)`.
pub fn synthesize(
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    phantom: &Phantom,
    sigma: f64,
    seed: u64,
) -> Result<DataMatrix> {
    add_gaussian_noise(&apply_forward(a, &phantom.u_true, b)?, sigma, seed)
}

/// The synthetic dynamic imaging setup: a square image blurred by a Gaussian
/// kernel and a kinetic dictionary.
///
/// `atom_norm` rescales every atom to that 2-norm (`None` keeps the raw
/// quadrature values). Together with `beta` it sets how strongly weak, blurred
/// edge pixels are shrunk away at moderate caps.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub size: usize,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub kinetic: KineticSpec,
    pub atom_norm: Option<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            size: 64,
            kernel_size: 5,
            kernel_sigma: 1.0,
            kinetic: KineticSpec::default(),
            atom_norm: Some(0.6),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub a: ForwardOperator,
    pub b: DictionaryMatrix,
    pub phantom: Phantom,
}

impl ExperimentSpec {
    pub fn shape(&self) -> SpatialShape {
        SpatialShape::new(self.size, self.size)
    }

    pub fn dictionary(&self) -> Result<DictionaryMatrix> {
        let b = self.kinetic.build()?;
        match self.atom_norm {
            Some(s) if s > 0.0 && s.is_finite() => {
                let unit = normalize_columns(&b, ColumnNorm::L2)?;
                if s == 1.0 {
                    Ok(unit)
                } else {
                    DictionaryMatrix::new(unit.values() * s, unit.time_grid().to_vec())
                }
            }
            Some(s) => bail!(InvalidParameter, "atom_norm must be positive, got {s}"),
            None => Ok(b),
        }
    }

    pub fn build(&self) -> Result<Experiment> {
        let shape = self.shape();
        let a = ForwardOperator::Conv2d(Conv2dOperator::gaussian(self.kernel_size, self.kernel_sigma, shape)?);
        let b = self.dictionary()?;
        let phantom = make_phantom(shape, b.atoms(), &default_regions(shape))?;
        Ok(Experiment { a, b, phantom })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::norm_l0_inf;

    #[test]
    fn empty_and_full_frame_phantoms() {
        let shape = SpatialShape::new(4, 5);
        let p = make_phantom(shape, 3, &[]).unwrap();
        assert_eq!(p.u_true.values(), &Mat::zeros(20, 3));
        let full = Region {
            shape: RegionShape::Rectangle { row0: 0, col0: 0, row1: 4, col1: 5 },
            basis_index: 2,
            value: 0.7,
        };
        let p = make_phantom(shape, 3, &[full]).unwrap();
        for i in 0..20 {
            assert_eq!(p.u_true.values().row(i).iter().copied().collect::<Vec<_>>(), [0.0, 0.0, 0.7]);
        }
    }

    #[test]
    fn overlap_rules() {
        let shape = SpatialShape::new(8, 8);
        let r = |j, v| Region {
            shape: RegionShape::Rectangle { row0: 1, col0: 1, row1: 4, col1: 4 },
            basis_index: j,
            value: v,
        };
        assert!(make_phantom(shape, 3, &[r(0, 1.0), r(1, 1.0)]).is_err());
        let p = make_phantom(shape, 3, &[r(0, 1.0), r(0, 2.0)]).unwrap();
        assert_eq!(p.u_true.values()[(9, 0)], 2.0);
        let out = Region {
            shape: RegionShape::Disk { center: (1.0, 4.0), radius: 2.0 },
            basis_index: 0,
            value: 1.0,
        };
        assert!(make_phantom(shape, 3, &[out]).is_err());
    }

    #[test]
    fn default_phantom_is_one_sparse_at_full_size() {
        let shape = SpatialShape::new(200, 200);
        let p = make_phantom(shape, 8, &default_regions(shape)).unwrap();
        assert_eq!(norm_l0_inf(p.u_true.values(), 0.0), 1);
        let used: Vec<usize> = p.labels.iter().flatten().copied().collect();
        assert!(used.contains(&1) && used.contains(&6));
    }

    #[test]
    fn metric_weights_by_index_distance() {
        let shape = SpatialShape::new(200, 200);
        let p = make_phantom(shape, 8, &default_regions(shape)).unwrap();
        let mut u = p.u_true.values().clone();
        let i = p.labels.iter().position(|l| *l == Some(6)).unwrap();
        u[(i, 6)] = 0.0;
        u[(i, 4)] = 1.0;
        let e = support_error(&u, &p, DEFAULT_SUPPORT_RTOL).unwrap();
        assert_eq!(e.wrong_count, 1);
        assert!((e.percent - 0.0025).abs() < 1e-12);
        assert!((e.weighted_percent - 0.005).abs() < 1e-12);
        assert_eq!(support_error(p.u_true.values(), &p, DEFAULT_SUPPORT_RTOL).unwrap().percent, 0.0);
    }

    #[test]
    fn background_activity_is_a_false_positive() {
        let shape = SpatialShape::new(2, 2);
        let reg = Region {
            shape: RegionShape::Rectangle { row0: 0, col0: 0, row1: 1, col1: 1 },
            basis_index: 0,
            value: 1.0,
        };
        let p = make_phantom(shape, 2, &[reg]).unwrap();
        let mut u = p.u_true.values().clone();
        u[(3, 1)] = 0.5;
        let e = support_error(&u, &p, DEFAULT_SUPPORT_RTOL).unwrap();
        assert_eq!((e.wrong_count, e.false_positive_count), (0, 1));
        assert_eq!(e.false_positive_percent, 25.0);
    }

    #[test]
    fn sweep_rejects_unsorted_caps() {
        let spec = ExperimentSpec { size: 8, ..ExperimentSpec::default() };
        let e = spec.build().unwrap();
        let p = SolverParams::default();
        assert!(sweep_v(&e.a, &e.b, &e.phantom, 0.0, 1, &[], &p).is_err());
        assert!(sweep_v(&e.a, &e.b, &e.phantom, 0.0, 1, &[0.1, 0.1], &p).is_err());
    }
}
