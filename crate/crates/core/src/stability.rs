//! Jacobian of the migration map and linear-stability classification.
//!
//! Every column of the Jacobian sums to 1, so the all-ones row vector is a
//! left eigenvector with eigenvalue 1. Stability is therefore judged on the
//! projected Jacobian, which drops one coordinate via `x_u = 1 - sum_{v != u} x_v`
//! and carries the remaining spectrum.

use faer::Mat;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{classify_fixed_point, is_fixed_point, EdgeKernel, PopulationState};
use crate::error::{Error, Result};
use crate::graph::TypeId;
use crate::influence::InfluenceAssignment;

/// Slack on the unit circle that absorbs eigensolver noise.
pub const STABILITY_SLACK: f64 = 1e-9;

/// Square matrix with rows and columns labelled by type ids.
/// Row = output type, column = input type.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    ids: Vec<TypeId>,
    data: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn new(ids: Vec<TypeId>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != ids.len() || data.ncols() != ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{}x{} matrix with {} labels",
                data.nrows(),
                data.ncols(),
                ids.len()
            )));
        }
        Ok(Self { ids, data })
    }

    /// Unlabelled matrix from rows; labels are `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix is not square".into()));
        }
        let data = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new((0..n as u64).map(TypeId).collect(), data)
    }

    pub fn dim(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[TypeId] {
        &self.ids
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.sum()).collect()
    }

    fn index_of(&self, v: TypeId) -> Result<usize> {
        self.ids
            .iter()
            .position(|&w| w == v)
            .ok_or(Error::UnknownType(v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub spectral_radius: f64,
}

/// Analytic Jacobian of the (smooth, no dead-zone) migration map at `state`.
pub fn jacobian(state: &PopulationState, assignment: &InfluenceAssignment) -> DenseMatrix {
    let kernel = EdgeKernel::new(state.graph(), assignment);
    let x = state.masses();
    let n = x.len();
    let mut j = DMatrix::identity(n, n);
    for &(u, v, f) in &kernel.edges {
        // both orientations of the edge
        for (a, b) in [(u, v), (v, u)] {
            let d = x[a] - x[b];
            let (fd, dfd) = (f.value(d), f.derivative(d));
            j[(a, a)] += x[b] * (fd + x[a] * dfd);
            j[(a, b)] = x[a] * (fd - x[b] * dfd);
        }
    }
    DenseMatrix {
        ids: kernel.ids,
        data: j,
    }
}

/// Central finite differences of the unnormalized migration map.
pub fn jacobian_fd(state: &PopulationState, assignment: &InfluenceAssignment, h: f64) -> DenseMatrix {
    let kernel = EdgeKernel::new(state.graph(), assignment);
    let x = state.masses();
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    let (mut plus, mut minus) = (vec![0.0; n], vec![0.0; n]);
    let mut probe = x.clone();
    for col in 0..n {
        probe[col] = x[col] + h;
        kernel.apply(&probe, 0.0, &mut plus);
        probe[col] = x[col] - h;
        kernel.apply(&probe, 0.0, &mut minus);
        probe[col] = x[col];
        for row in 0..n {
            j[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    DenseMatrix {
        ids: kernel.ids,
        data: j,
    }
}

/// Jacobian of the map with `eliminated` substituted by one minus the rest:
/// `J'_{v,w} = J_{v,w} - J_{v,u}` for `v, w != u`.
pub fn projected_jacobian(j: &DenseMatrix, eliminated: TypeId) -> Result<DenseMatrix> {
    let u = j.index_of(eliminated)?;
    let keep: Vec<usize> = (0..j.dim()).filter(|&i| i != u).collect();
    let data = DMatrix::from_fn(keep.len(), keep.len(), |r, c| {
        let (v, w) = (keep[r], keep[c]);
        j.data[(v, w)] - j.data[(v, u)]
    });
    let ids = keep.iter().map(|&i| j.ids[i]).collect();
    Ok(DenseMatrix { ids, data })
}

/// All eigenvalues of a real square matrix (Hessenberg reduction and
/// multishift QR with exceptional shifts).
pub fn eigenvalues(m: &DenseMatrix) -> Result<Spectrum> {
    let n = m.dim();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            spectral_radius: 0.0,
        });
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let a = Mat::from_fn(n, n, |i, j| m.data[(i, j)]);
    let eigenvalues: Vec<[f64; 2]> = a
        .eigenvalues()
        .map_err(|e| Error::Numeric(format!("eigensolver failed on {n}x{n} matrix: {e:?}")))?
        .iter()
        .map(|c| [c.re, c.im])
        .collect();
    let spectral_radius = eigenvalues
        .iter()
        .map(|[re, im]| re.hypot(*im))
        .fold(0.0, f64::max);
    Ok(Spectrum {
        eigenvalues,
        spectral_radius,
    })
}

/// True iff every column's diagonal entry strictly dominates the rest of the
/// column in absolute value (i.e. `J^T` is strictly diagonally dominant).
pub fn check_diagonal_dominance(j: &DenseMatrix) -> bool {
    j.data.column_iter().enumerate().all(|(u, col)| {
        let off: f64 = col
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != u)
            .map(|(_, x)| x.abs())
            .sum();
        col[u].abs() - off > 0.0
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub theta_active: f64,
    /// Flow tolerance for accepting the input as a fixed point. Looser than
    /// the pure-dynamics default because limits come from finite runs.
    pub tol_flow: f64,
    pub tol_mass: f64,
    /// Coordinate removed by the projection; highest id when unset.
    pub eliminate: Option<TypeId>,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            theta_active: crate::dynamics::DEFAULT_THETA_ACTIVE,
            tol_flow: 1e-9,
            tol_mass: 1e-6,
            eliminate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub fixed_point: Vec<f64>,
    pub spectrum: Vec<[f64; 2]>,
    pub spectral_radius_projected: f64,
    pub linearly_stable: bool,
    pub active_independent: bool,
    /// Whether `sup|F| < 1/2` holds, i.e. the update map is a local
    /// diffeomorphism and the stability theory applies as stated.
    pub within_diffeomorphism_hypothesis: bool,
}

pub fn classify_stability(
    p: &PopulationState,
    assignment: &InfluenceAssignment,
    opts: StabilityOptions,
) -> Result<StabilityReport> {
    if !is_fixed_point(p, assignment, opts.tol_flow) {
        return Err(Error::InvalidArgument(format!(
            "state is not a fixed point at flow tolerance {:e}",
            opts.tol_flow
        )));
    }
    let class = classify_fixed_point(p, opts.theta_active, opts.tol_mass)?;
    let j = jacobian(p, assignment);
    let spectrum = match (opts.eliminate, j.ids.last()) {
        (_, None) => Spectrum {
            eigenvalues: Vec::new(),
            spectral_radius: 0.0,
        },
        (Some(u), _) => eigenvalues(&projected_jacobian(&j, u)?)?,
        (None, Some(&u)) => eigenvalues(&projected_jacobian(&j, u)?)?,
    };
    Ok(StabilityReport {
        fixed_point: p.masses(),
        linearly_stable: spectrum.spectral_radius <= 1.0 + STABILITY_SLACK,
        spectral_radius_projected: spectrum.spectral_radius,
        spectrum: spectrum.eigenvalues,
        active_independent: class.independent,
        within_diffeomorphism_hypothesis: assignment.sup_abs() < 0.5,
    })
}

/// Largest distance between matched eigenvalues when each eigenvalue of `a`
/// is greedily paired with the nearest unused one of `b`. Infinite when the
/// lengths differ.
pub fn spectrum_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x[0] - y[0]).hypot(x[1] - y[1])))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("lengths match");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

/// Drop the eigenvalue closest to 1 (the conservation eigenvalue).
pub fn without_unit_eigenvalue(eigs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let k = eigs
        .iter()
        .enumerate()
        .min_by(|p, q| {
            let dp = (p.1[0] - 1.0).hypot(p.1[1]);
            let dq = (q.1[0] - 1.0).hypot(q.1[1]);
            dp.total_cmp(&dq)
        })
        .map(|(k, _)| k);
    eigs.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != k)
        .map(|(_, e)| *e)
        .collect()
}
