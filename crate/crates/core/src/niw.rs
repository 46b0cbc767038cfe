//! Normal-Inverse-Wishart beliefs and their multivariate-t marginals.
//!
//! A belief covers a set of graph coordinates (node payoffs and edge costs).
//! Observing some coordinates conditions the belief onto the rest: the mean
//! moves by the regression on the observed block, the scale becomes the Schur
//! complement and the degrees of freedom drop by the number observed. The
//! scale is never revised by the observed scatter.
//!
//! All solves go through Cholesky factors; nothing here forms an inverse.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::network::{EdgeId, NodeId};
use crate::special::student_t_ln_pdf;
use crate::{Error, Result};

/// Diagonal jitter tried once when a Cholesky factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-9;

/// One uncertain quantity on the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coord {
    Payoff(NodeId),
    Cost(EdgeId),
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Payoff(n) => write!(f, "payoff[{}]", n.0),
            Coord::Cost(e) => write!(f, "cost[{}]", e.0),
        }
    }
}

/// Ordered list of coordinates with reverse lookup.
#[derive(Debug, Clone)]
pub struct IndexMap {
    coords: Vec<Coord>,
    positions: HashMap<Coord, usize>,
}

impl IndexMap {
    pub fn new(coords: Vec<Coord>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            if positions.insert(*c, i).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate coordinate {c} in index map"
                )));
            }
        }
        Ok(Self { coords, positions })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn position(&self, coord: Coord) -> Option<usize> {
        self.positions.get(&coord).copied()
    }

    pub fn contains(&self, coord: Coord) -> bool {
        self.positions.contains_key(&coord)
    }

    fn require(&self, coord: Coord) -> Result<usize> {
        self.position(coord).ok_or(Error::UnknownCoordinate(coord))
    }
}

/// Cholesky factorization with one jittered retry.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let n = m.nrows();
    (m + DMatrix::<f64>::identity(n, n) * CHOLESKY_JITTER)
        .cholesky()
        .ok_or_else(|| Error::Degenerate(format!("{n}x{n} matrix is not positive definite")))
}

fn check_square_symmetric(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::invalid(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::invalid(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// One Normal-Inverse-Wishart component `(mu, psi, nu)` over `index`.
///
/// `psi` and `index` sit behind `Arc`s: every component of a mixture that has
/// been conditioned on the same coordinates carries the same scale matrix, so
/// splits and clones only copy the mean.
#[derive(Debug, Clone)]
pub struct NiwParams {
    mu: DVector<f64>,
    psi: Arc<DMatrix<f64>>,
    nu: f64,
    index: Arc<IndexMap>,
}

impl NiwParams {
    pub fn new(mu: DVector<f64>, psi: DMatrix<f64>, nu: f64, coords: Vec<Coord>) -> Result<Self> {
        let p = mu.len();
        if p == 0 {
            return Err(Error::EmptyBelief);
        }
        if coords.len() != p {
            return Err(Error::invalid(format!(
                "index map has {} entries for a {p}-dimensional mean",
                coords.len()
            )));
        }
        check_square_symmetric(&psi, p, "psi")?;
        if psi.clone().cholesky().is_none() {
            return Err(Error::Degenerate("psi is not positive definite".into()));
        }
        if !(nu > p as f64 + 1.0) {
            return Err(Error::invalid(format!(
                "nu = {nu} must exceed p + 1 = {}",
                p + 1
            )));
        }
        let index = Arc::new(IndexMap::new(coords)?);
        Ok(Self {
            mu,
            psi: Arc::new(psi),
            nu,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn index(&self) -> &IndexMap {
        &self.index
    }

    pub fn mean_of(&self, coord: Coord) -> Option<f64> {
        self.index.position(coord).map(|i| self.mu[i])
    }

    /// Degrees of freedom of the multivariate-t marginal.
    pub fn t_dof(&self) -> f64 {
        self.nu - self.dim() as f64 + 1.0
    }

    /// Location, scale and dof of the univariate-t marginal of `coord`.
    pub fn marginal_t(&self, coord: Coord) -> Result<(f64, f64, f64)> {
        let i = self.index.require(coord)?;
        let dof = self.t_dof();
        if !(dof > 0.0) {
            return Err(Error::ImproperMarginal { dof });
        }
        Ok((self.mu[i], (self.psi[(i, i)] / dof).sqrt(), dof))
    }

    /// Same scale, index and dof, so the two differ at most in their means.
    pub(crate) fn shares_scale_with(&self, other: &NiwParams) -> bool {
        Arc::ptr_eq(&self.psi, &other.psi)
            && Arc::ptr_eq(&self.index, &other.index)
            && self.nu == other.nu
    }

    /// Factorizes psi. Only the unit tests and the closure checks need this;
    /// the conditioning path never refactorizes the full matrix.
    pub fn is_positive_definite(&self) -> bool {
        self.psi.as_ref().clone().cholesky().is_some()
    }
}

/// Precomputed conditioning of one scale matrix on a fixed set of coordinates.
///
/// The gain `Psi_21 Psi_11^{-1}` and the Schur complement depend only on the
/// scale, so a mixture whose components share it conditions every mean with a
/// single factorization.
pub struct Conditioner {
    source_psi: Arc<DMatrix<f64>>,
    source_index: Arc<IndexMap>,
    observed: Vec<usize>,
    remaining: Vec<usize>,
    gain: DMatrix<f64>,
    psi: Arc<DMatrix<f64>>,
    index: Arc<IndexMap>,
    nu: f64,
}

impl Conditioner {
    pub fn new(params: &NiwParams, coords: &[Coord]) -> Result<Self> {
        let p = params.dim();
        let k = coords.len();
        let mut observed = Vec::with_capacity(k);
        let mut is_observed = vec![false; p];
        for &c in coords {
            let i = params.index.require(c)?;
            if is_observed[i] {
                return Err(Error::invalid(format!("coordinate {c} observed twice")));
            }
            is_observed[i] = true;
            observed.push(i);
        }
        if k == p {
            return Err(Error::EmptyBelief);
        }
        let remaining: Vec<usize> = (0..p).filter(|&i| !is_observed[i]).collect();
        let psi = params.psi.as_ref();

        if k == 0 {
            return Ok(Self {
                source_psi: Arc::clone(&params.psi),
                source_index: Arc::clone(&params.index),
                observed,
                remaining,
                gain: DMatrix::zeros(p, 0),
                psi: Arc::clone(&params.psi),
                index: Arc::clone(&params.index),
                nu: params.nu,
            });
        }

        let psi11 = psi.select_rows(&observed).select_columns(&observed);
        let psi12 = psi.select_rows(&observed).select_columns(&remaining);
        let psi22 = psi.select_rows(&remaining).select_columns(&remaining);
        let chol = cholesky_jittered(&psi11)
            .map_err(|_| Error::Degenerate("observed block of psi is singular".into()))?;
        // X = Psi_11^{-1} Psi_12, gain = X^T = Psi_21 Psi_11^{-1}.
        let x = chol.solve(&psi12);
        let mut schur = psi22 - psi12.transpose() * &x;
        let sym = (&schur + schur.transpose()) * 0.5;
        schur = sym;

        let index = IndexMap::new(remaining.iter().map(|&i| params.index.coords[i]).collect())?;
        Ok(Self {
            source_psi: Arc::clone(&params.psi),
            source_index: Arc::clone(&params.index),
            observed,
            remaining,
            gain: x.transpose(),
            psi: Arc::new(schur),
            index: Arc::new(index),
            nu: params.nu - k as f64,
        })
    }

    /// True when `params` has the scale this conditioner was built from.
    pub fn applies_to(&self, params: &NiwParams) -> bool {
        Arc::ptr_eq(&self.source_psi, &params.psi) && Arc::ptr_eq(&self.source_index, &params.index)
    }

    /// Conditions `params` on `values` (aligned with the coordinates passed to
    /// [`Conditioner::new`]).
    pub fn apply(&self, params: &NiwParams, values: &[f64]) -> Result<NiwParams> {
        if !self.applies_to(params) {
            return Err(Error::invalid(
                "conditioner applied to a belief with a different scale",
            ));
        }
        if values.len() != self.observed.len() {
            return Err(Error::invalid(format!(
                "{} values for {} observed coordinates",
                values.len(),
                self.observed.len()
            )));
        }
        let resid = DVector::from_iterator(
            values.len(),
            self.observed
                .iter()
                .zip(values)
                .map(|(&i, v)| v - params.mu[i]),
        );
        let mu2 = DVector::from_iterator(
            self.remaining.len(),
            self.remaining.iter().map(|&i| params.mu[i]),
        );
        let mu = if self.observed.is_empty() {
            mu2
        } else {
            mu2 + &self.gain * resid
        };
        Ok(NiwParams {
            mu,
            psi: Arc::clone(&self.psi),
            nu: self.nu,
            index: Arc::clone(&self.index),
        })
    }
}

/// Conditions `belief` on observed coordinate values.
pub fn condition_niw(belief: &NiwParams, observed: &[(Coord, f64)]) -> Result<NiwParams> {
    let coords: Vec<Coord> = observed.iter().map(|(c, _)| *c).collect();
    let values: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
    Conditioner::new(belief, &coords)?.apply(belief, &values)
}

/// Multivariate-t distribution `t_dof(mu, shape)`.
#[derive(Debug, Clone)]
pub struct MvtParams {
    mu: DVector<f64>,
    shape: DMatrix<f64>,
    dof: f64,
    index: Arc<IndexMap>,
}

impl MvtParams {
    pub fn new(
        mu: DVector<f64>,
        shape: DMatrix<f64>,
        dof: f64,
        coords: Vec<Coord>,
    ) -> Result<Self> {
        let p = mu.len();
        if coords.len() != p {
            return Err(Error::invalid("index map length differs from dimension"));
        }
        check_square_symmetric(&shape, p, "shape")?;
        if !(dof > 0.0) {
            return Err(Error::ImproperMarginal { dof });
        }
        Ok(Self {
            mu,
            shape,
            dof,
            index: Arc::new(IndexMap::new(coords)?),
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn index(&self) -> &IndexMap {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Covariance `dof/(dof-2) * shape`, defined for `dof > 2`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.dof > 2.0).then(|| &self.shape * (self.dof / (self.dof - 2.0)))
    }

    /// Marginal over a subset of coordinates, in the order given.
    pub fn marginal(&self, coords: &[Coord]) -> Result<MvtParams> {
        let pos = coords
            .iter()
            .map(|&c| self.index.require(c))
            .collect::<Result<Vec<_>>>()?;
        let mu = DVector::from_iterator(pos.len(), pos.iter().map(|&i| self.mu[i]));
        let shape = self.shape.select_rows(&pos).select_columns(&pos);
        Ok(MvtParams {
            mu,
            shape,
            dof: self.dof,
            index: Arc::new(IndexMap::new(coords.to_vec())?),
        })
    }
}

/// Integrates the covariance out of an NIW belief.
pub fn niw_to_mvt(belief: &NiwParams) -> Result<MvtParams> {
    let dof = belief.t_dof();
    if !(dof > 0.0) {
        return Err(Error::ImproperMarginal { dof });
    }
    Ok(MvtParams {
        mu: belief.mu.clone(),
        shape: belief.psi.as_ref() / dof,
        dof,
        index: Arc::clone(&belief.index),
    })
}

pub fn mvt_marginal_ln_density(dist: &MvtParams, coord: Coord, x: f64) -> Result<f64> {
    let i = dist.index.require(coord)?;
    Ok(student_t_ln_pdf(
        x,
        dist.mu[i],
        dist.shape[(i, i)].sqrt(),
        dist.dof,
    ))
}

/// Univariate-t density of one coordinate of `dist` at `x`.
pub fn mvt_marginal_density(dist: &MvtParams, coord: Coord, x: f64) -> Result<f64> {
    mvt_marginal_ln_density(dist, coord, x).map(f64::exp)
}

/// Draws `z / sqrt(w / dof)` rows with `z ~ N(0, L L^T)`, `w ~ chi2(dof)`.
/// Returns the centered draws row-major, `n x L.nrows()`.
pub(crate) fn centered_t_draws<R: Rng + ?Sized>(
    lower: &DMatrix<f64>,
    dof: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = lower.nrows();
    let chi =
        ChiSquared::new(dof).map_err(|e| Error::invalid(format!("chi-square dof {dof}: {e}")))?;
    let mut out = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for row in out.chunks_exact_mut(p) {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let w: f64 = chi.sample(rng);
        let s = (dof / w).sqrt();
        for (r, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += lower[(r, c)] * z[c];
            }
            *slot = acc * s;
        }
    }
    Ok(out)
}

/// Draws `n` i.i.d. rows from `dist`, returned as an `n x p` matrix.
pub fn sample_mvt<R: Rng + ?Sized>(
    dist: &MvtParams,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let lower = cholesky_jittered(&dist.shape)?.l();
    let p = dist.dim();
    let mut draws = centered_t_draws(&lower, dist.dof, n, rng)?;
    for row in draws.chunks_exact_mut(p) {
        for (v, m) in row.iter_mut().zip(dist.mu.iter()) {
            *v += m;
        }
    }
    Ok(DMatrix::from_row_slice(n, p, &draws))
}
