use nalgebra::DMatrix;

use crate::eigsolve::{ritz_in, AuxFields, Pencil, RitzSet, StepObserver};
use crate::error::{Error, Result};
use crate::matrixkit::{at_b, orthonormalize_with_image, svd_block, InnerProduct, Metric, OrthoOptions, Subspace};
use crate::oracle::Spectrum;
use crate::precond::Preconditioner;

/// Cosines below this count as zero when intersecting with a complement.
pub const INTERSECT_TOL: f64 = 1e-10;

/// Relative floor on `σ_min(R̃)` below which a `γ̃` sample is discarded.
pub const GAMMA_COND_TOL: f64 = 1e-10;

/// `span(y) ∩ span(skipped)^{⊥A}` for A-orthonormal `y` and `skipped`.
///
/// The null space of `skippedᵀ A Y` is taken from its SVD with an absolute
/// threshold of [`INTERSECT_TOL`] on the singular values; the resulting
/// vectors are A-projected against `skipped` once more and re-orthonormalized.
pub fn intersect(y: &Subspace, skipped: &Subspace, a: &crate::matrixkit::SymOperator) -> Result<Subspace> {
    if y.n() != skipped.n() {
        return Err(Error::dims("intersect", y.n(), skipped.n()));
    }
    if skipped.dim() == 0 || y.dim() == 0 {
        return Ok(y.clone());
    }
    let c = at_b(skipped.gbasis(), y.basis());
    let svd = svd_block(&c)?;
    let null: Vec<usize> = (0..y.dim()).filter(|&k| svd.values[k] <= INTERSECT_TOL).collect();
    if null.is_empty() {
        return Ok(Subspace::empty(y.n(), y.metric()));
    }
    let coeff = svd.right.select_columns(&null);
    let mut x = y.basis() * &coeff;
    let mut gx = y.gbasis() * &coeff;
    let proj = at_b(skipped.gbasis(), &x);
    x -= skipped.basis() * &proj;
    gx -= skipped.gbasis() * &proj;
    orthonormalize_with_image(&x, &gx, InnerProduct::Weighted(a), OrthoOptions::truncating())
}

/// Span of two A-orthonormal blocks, A-orthonormalized with truncation.
fn union(x: &Subspace, y: &Subspace, a: &crate::matrixkit::SymOperator) -> Result<Subspace> {
    if y.dim() == 0 {
        return Ok(x.clone());
    }
    if x.dim() == 0 {
        return Ok(y.clone());
    }
    let b = hcat(x.basis(), y.basis());
    let gb = hcat(x.gbasis(), y.gbasis());
    orthonormalize_with_image(&b, &gb, InnerProduct::Weighted(a), OrthoOptions::truncating())
}

fn hcat(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols() + y.ncols());
    out.columns_mut(0, x.ncols()).copy_from(x);
    out.columns_mut(x.ncols(), y.ncols()).copy_from(y);
    out
}

/// Eigenvector blocks whose A-complements define `W̃` and `Ŵ`.
#[derive(Debug, Clone)]
pub struct InvariantSplit {
    pub i: usize,
    pub j: usize,
    pub s: usize,
    /// `w_{j−s+i+1}, …, w_j`; `W̃` is its A-complement.
    pub skipped_tilde: Subspace,
    /// `w_{j−s+1}, …, w_{j−s+i}`; `Ŵ` is its A-complement.
    pub skipped_hat: Subspace,
    /// `μ_{j+1}`.
    pub mu_low: f64,
}

impl InvariantSplit {
    pub fn new(spectrum: &Spectrum, i: usize, j: usize, s: usize) -> Result<Self> {
        if !(1 <= i && i <= s && s <= j && j < spectrum.n) {
            return Err(Error::Parameter(format!(
                "need 1 <= i <= s <= j < n, got i = {i}, s = {s}, j = {j}, n = {}",
                spectrum.n
            )));
        }
        Ok(Self {
            i,
            j,
            s,
            skipped_tilde: spectrum.eigvecs(j - s + i + 1, j)?,
            skipped_hat: spectrum.eigvecs(j - s + 1, j - s + i)?,
            mu_low: spectrum.mu(j + 1)?,
        })
    }
}

/// One auxiliary step's measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSample {
    pub step: usize,
    /// `dim Ṽ`, `dim V̂`.
    pub dim_tilde: usize,
    pub dim_hat: usize,
    /// `dim Ũ`, `dim Û`.
    pub dim_u_tilde: usize,
    pub dim_u_hat: usize,
    /// Dimension `s̃` of the space handed to the final Rayleigh–Ritz step.
    pub dim_next: usize,
    /// `None` when `R̃` is numerically rank deficient or the dimensions
    /// do not allow the measurement.
    pub gamma_tilde: Option<f64>,
    /// `dim V = s`, `dim Ṽ = i` and `dim V̂ = s − i`.
    pub dims_ok: bool,
    /// A sample exists and lies below 1.
    pub valid: bool,
    /// For `j = s` with `θ_s > μ_{s+1}` and `dims_ok`: whether the two partial
    /// Rayleigh–Ritz outputs coincide with `span V⁺ ∩ W̃` and `span V⁺ ∩ Ŵ`
    /// of the next block `V⁺` (largest principal-angle sine ≤ 1e-8).
    pub lemma_ok: Option<bool>,
}

/// Largest principal-angle sine accepted by the subspace-equality checks.
pub const SUBSPACE_EQ_TOL: f64 = 1e-8;

/// `γ̃ = ‖P (R̃ᵀ A R̃)^{-1/2}‖_A` with `R̃ = A⁻¹MṼ − Ṽ(ṼᵀMṼ)` and
/// `P = A⁻¹MṼ − Ũ ŨᵀMṼ`.
///
/// `vt` must have dimension `i` and `ut` at least `i`. When `ut` is larger,
/// `A⁻¹MṼ` is A-projected onto it and the projection spans the `Ũ` used.
/// Returns `None` when `σ_min(R̃) ≤ 1e-10 σ_max(R̃)` in the A-norm.
pub fn gamma_tilde(vt: &Subspace, ut: &Subspace, pencil: &Pencil) -> Result<Option<f64>> {
    let i = vt.dim();
    if i == 0 || ut.dim() < i {
        return Ok(None);
    }
    let mv = pencil.m().apply(vt.basis())?;
    let hv = pencil.solve_a(&mv)?;
    let c = at_b(vt.basis(), &mv);
    let rt = &hv - vt.basis() * c;
    let u = if ut.dim() > i {
        let y = at_b(ut.gbasis(), &hv);
        let proj = ut.basis() * &y;
        let gproj = ut.gbasis() * &y;
        let u = orthonormalize_with_image(&proj, &gproj, InnerProduct::Weighted(pencil.a()), OrthoOptions::truncating())?;
        if u.dim() < i {
            return Ok(None);
        }
        u
    } else {
        ut.clone()
    };
    let p = &hv - u.basis() * at_b(u.gbasis(), &hv);
    let xr = pencil.a_half(&rt)?;
    let xp = pencil.a_half(&p)?;
    let sr = svd_block(&xr)?;
    let (smax, smin) = (sr.values[0], sr.values[i - 1]);
    if !(smin > GAMMA_COND_TOL * smax) {
        return Ok(None);
    }
    let mut b = xp * &sr.right;
    for k in 0..i {
        b.column_mut(k).scale_mut(1.0 / sr.values[k]);
    }
    Ok(Some(svd_block(&b)?.values[0]))
}

/// One step of the auxiliary iteration started from `state`.
///
/// `U = VΘ + T R_V`; Rayleigh–Ritz with `dim Ṽ` pairs on `Ṽ + Ũ` and with
/// `dim V̂` pairs on `V̂ + Û`, followed by Rayleigh–Ritz on the span of both
/// results, which keeps all of it.
pub fn aux_step(
    state: &RitzSet,
    pencil: &Pencil,
    t: &Preconditioner,
    split: &InvariantSplit,
    step: usize,
) -> Result<(RitzSet, GammaSample)> {
    let a = pencil.a();
    let v = &state.vectors;
    let mut u = t.apply(&state.residual)?;
    for (k, &th) in state.values.iter().enumerate() {
        u.column_mut(k).axpy(th, &v.basis().column(k), 1.0);
    }
    let au = a.apply(&u)?;
    let ub = orthonormalize_with_image(&u, &au, InnerProduct::Weighted(a), OrthoOptions::truncating())?;

    let vt = intersect(v, &split.skipped_tilde, a)?;
    let vh = intersect(v, &split.skipped_hat, a)?;
    let ut = intersect(&ub, &split.skipped_tilde, a)?;
    let uh = intersect(&ub, &split.skipped_hat, a)?;
    let dims_ok = state.s() == split.s && vt.dim() == split.i && vh.dim() == split.s - split.i;
    let gamma = if vt.dim() == split.i { gamma_tilde(&vt, &ut, pencil)? } else { None };

    let half = |x: &Subspace, y: &Subspace| -> Result<Subspace> {
        if x.dim() == 0 {
            return Ok(Subspace::empty(x.n(), Metric::Weighted));
        }
        Ok(ritz_in(&union(x, y, a)?, pencil, x.dim())?.vectors)
    };
    let tilde_half = half(&vt, &ut)?;
    let hat_half = half(&vh, &uh)?;
    let joined = union(&tilde_half, &hat_half, a)?;
    if joined.dim() == 0 {
        return Err(Error::RankDeficient {
            rank: 0,
            required: split.s,
        });
    }
    let next = ritz_in(&joined, pencil, joined.dim())?;
    let lemma_ok = if split.j == split.s && dims_ok && state.values[split.s - 1] > split.mu_low {
        let nt = intersect(&next.vectors, &split.skipped_tilde, a)?;
        let nh = intersect(&next.vectors, &split.skipped_hat, a)?;
        Some(
            next.s() == split.s
                && tilde_half.distance(&nt)? <= SUBSPACE_EQ_TOL
                && hat_half.distance(&nh)? <= SUBSPACE_EQ_TOL,
        )
    } else {
        None
    };
    let sample = GammaSample {
        step,
        dim_tilde: vt.dim(),
        dim_hat: vh.dim(),
        dim_u_tilde: ut.dim(),
        dim_u_hat: uh.dim(),
        dim_next: joined.dim(),
        gamma_tilde: gamma,
        dims_ok,
        valid: gamma.is_some_and(|g| g < 1.0),
        lemma_ok,
    };
    Ok((next, sample))
}

/// Auxiliary iterations for several Ritz indices `i`, started once
/// `θ_s > μ_{j+1}` and then stepped once per solver step.
pub struct AuxTracker<'a> {
    pencil: &'a Pencil,
    t: &'a Preconditioner,
    mu_low: f64,
    s: usize,
    splits: Vec<InvariantSplit>,
    states: Vec<Option<RitzSet>>,
    /// Samples per tracked index, in the order given to [`AuxTracker::new`].
    pub samples: Vec<Vec<GammaSample>>,
    /// First failure; tracking stops after it.
    pub error: Option<String>,
    /// Solver step at which the auxiliary iterations started.
    pub start: Option<usize>,
}

impl<'a> AuxTracker<'a> {
    pub fn new(
        pencil: &'a Pencil,
        t: &'a Preconditioner,
        spectrum: &Spectrum,
        indices: &[usize],
        j: usize,
        s: usize,
    ) -> Result<Self> {
        let splits = indices
            .iter()
            .map(|&i| InvariantSplit::new(spectrum, i, j, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pencil,
            t,
            mu_low: spectrum.mu(j + 1)?,
            s,
            states: vec![None; splits.len()],
            samples: vec![vec![]; splits.len()],
            splits,
            error: None,
            start: None,
        })
    }

    pub fn indices(&self) -> Vec<usize> {
        self.splits.iter().map(|sp| sp.i).collect()
    }

    /// Largest `γ̃` sample for index position `k`.
    pub fn max_gamma(&self, k: usize) -> Option<f64> {
        self.samples[k].iter().filter_map(|g| g.gamma_tilde).reduce(f64::max)
    }

    /// Samples failing the dimension or partial Rayleigh–Ritz checks, as `(i, step)`.
    pub fn flagged(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for (sp, samples) in self.splits.iter().zip(&self.samples) {
            for g in samples {
                if !g.dims_ok || g.lemma_ok == Some(false) {
                    out.push((sp.i, g.step));
                }
            }
        }
        out
    }
}

impl StepObserver for AuxTracker<'_> {
    fn observe(&mut self, step: usize, ritz: &RitzSet) -> Vec<AuxFields> {
        if self.error.is_some() {
            return vec![];
        }
        if self.start.is_none() {
            if ritz.s() == self.s && ritz.values[self.s - 1] > self.mu_low {
                self.start = Some(step);
                for st in &mut self.states {
                    *st = Some(ritz.clone());
                }
            } else {
                return vec![];
            }
        }
        let mut fields = vec![AuxFields::default(); self.s];
        for k in 0..self.splits.len() {
            let Some(state) = self.states[k].take() else { continue };
            match aux_step(&state, self.pencil, self.t, &self.splits[k], step) {
                Ok((next, sample)) => {
                    fields[self.splits[k].i - 1] = AuxFields {
                        gamma_tilde: sample.gamma_tilde,
                        dim_tilde: Some(sample.dim_tilde),
                        dim_hat: Some(sample.dim_hat),
                    };
                    self.samples[k].push(sample);
                    self.states[k] = Some(next);
                }
                Err(e) => {
                    self.error = Some(format!("aux step {step}, i = {}: {e}", self.splits[k].i));
                    return fields;
                }
            }
        }
        fields
    }
}
