use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::oracle::Spectrum;

/// Which estimate a curve evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundKind {
    /// Exact-inverse estimate, final phase (`j = s`, `q = 0`).
    Lm2e1,
    /// Exact-inverse estimate for `θ_s ∈ (μ_{j+1}, μ_j]`.
    Lm2e2,
    /// Final phase with quality parameter `q`.
    Thm2e1,
    /// General `j` with quality parameter `q`.
    Thm2e2,
    /// Single-step estimate for `θ_s`, iterated (`i = s`).
    Thm2e3,
    /// `thm2e1` with `κ` built from the neighbor `μ_{i+1}` instead of `μ_{s+1}`.
    Neighbor,
    /// `thm2e2` stated for ascending eigenvalues `λ = 1/μ` of `(A, M)`.
    Bpsde,
}

impl BoundKind {
    pub const ALL: [BoundKind; 7] = [
        BoundKind::Lm2e1,
        BoundKind::Lm2e2,
        BoundKind::Thm2e1,
        BoundKind::Thm2e2,
        BoundKind::Thm2e3,
        BoundKind::Neighbor,
        BoundKind::Bpsde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Lm2e1 => "lm2e1",
            BoundKind::Lm2e2 => "lm2e2",
            BoundKind::Thm2e1 => "thm2e1",
            BoundKind::Thm2e2 => "thm2e2",
            BoundKind::Thm2e3 => "thm2e3",
            BoundKind::Neighbor => "neighbor",
            BoundKind::Bpsde => "bpsde",
        }
    }

    /// Exact-inverse kinds ignore the quality parameter.
    pub fn uses_quality(self) -> bool {
        !matches!(self, BoundKind::Lm2e1 | BoundKind::Lm2e2)
    }

    /// Kinds whose ratio is measured against `μ_{j+1}` with `j` free.
    pub fn general_j(self) -> bool {
        matches!(self, BoundKind::Lm2e2 | BoundKind::Thm2e2 | BoundKind::Thm2e3 | BoundKind::Bpsde)
    }

    /// Backed by a theorem for the block iteration (the neighbor variant is
    /// a comparison curve only).
    pub fn guaranteed(self) -> bool {
        self != BoundKind::Neighbor
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Parameter(format!("unknown bound kind '{s}'")))
    }
}

/// `κ_i = (μ_{j+1} − μ_n)/(μ_{j−s+i} − μ_n)`.
pub fn kappa(spectrum: &Spectrum, i: usize, j: usize, s: usize) -> Result<f64> {
    check_indices(spectrum, i, j, s)?;
    kappa_from(spectrum.mu(j + 1)?, spectrum.mu(j - s + i)?, spectrum.mu_min)
}

fn kappa_from(mu_low: f64, mu_ref: f64, mu_n: f64) -> Result<f64> {
    let den = mu_ref - mu_n;
    if !(den > 0.0) {
        return Err(Error::Precondition(format!(
            "κ needs μ_ref > μ_n, got μ_ref = {mu_ref}, μ_n = {mu_n}"
        )));
    }
    Ok((mu_low - mu_n) / den)
}

/// `(κ + q(2−κ)) / ((2−κ) + qκ)`; `q = 0` gives `κ/(2−κ)`.
pub fn conv_factor(kappa: f64, q: f64) -> f64 {
    (kappa + q * (2.0 - kappa)) / ((2.0 - kappa) + q * kappa)
}

/// Largest `μ_ref − θ` compatible with `(μ_ref − θ)/(θ − μ_lower) ≤ c`.
pub fn ratio_to_error(c: f64, mu_ref: f64, mu_lower: f64) -> f64 {
    c * (mu_ref - mu_lower) / (1.0 + c)
}

/// `(μ_ref − θ)/(θ − μ_lower)`.
pub fn distance_ratio(theta: f64, mu_ref: f64, mu_lower: f64) -> f64 {
    (mu_ref - theta) / (theta - mu_lower)
}

fn check_indices(spectrum: &Spectrum, i: usize, j: usize, s: usize) -> Result<()> {
    if !(1 <= i && i <= s && s <= j && j + 1 <= spectrum.n) {
        return Err(Error::Parameter(format!(
            "need 1 <= i <= s <= j <= n-1, got i = {i}, s = {s}, j = {j}, n = {}",
            spectrum.n
        )));
    }
    Ok(())
}

/// Ratio bounds `f^{2ℓ} · r₀` for `ℓ = 0..=L` and their error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub i: usize,
    pub j: usize,
    pub s: usize,
    pub kappa: f64,
    pub q: f64,
    pub factor: f64,
    pub initial_ratio: f64,
    /// The eigenvalue approached (`μ_{j−s+i}`, or `λ_{j−s+i}` for `bpsde`).
    pub reference: f64,
    /// The separating eigenvalue (`μ_{j+1}`, or `λ_{j+1}` for `bpsde`).
    pub lower: f64,
    pub ratio_bounds: Vec<f64>,
    pub error_bounds: Vec<f64>,
    /// Why the curve cannot be drawn, e.g. a multiple eigenvalue.
    pub undefined: Option<String>,
}

impl BoundCurve {
    pub fn is_defined(&self) -> bool {
        self.undefined.is_none()
    }

    /// Ratio observed for a Ritz value `θ` in this curve's orientation.
    pub fn observed_ratio(&self, theta: f64) -> f64 {
        match self.kind {
            // (ϑ − λ_ref)/(λ_low − ϑ) with ϑ = 1/θ
            BoundKind::Bpsde => {
                let v = 1.0 / theta;
                (v - self.reference) / (self.lower - v)
            }
            _ => distance_ratio(theta, self.reference, self.lower),
        }
    }

    /// Observed error `μ_ref − θ` (or `ϑ − λ_ref`).
    pub fn observed_error(&self, theta: f64) -> f64 {
        match self.kind {
            BoundKind::Bpsde => 1.0 / theta - self.reference,
            _ => self.reference - theta,
        }
    }
}

/// Curve for the `i`-th Ritz value from the origin value `θ_s⁽⁰⁾` over `L` steps.
pub fn bound_curve(
    kind: BoundKind,
    spectrum: &Spectrum,
    i: usize,
    j: usize,
    s: usize,
    q: f64,
    theta_s0: f64,
    steps: usize,
) -> Result<BoundCurve> {
    if kind.general_j() {
        check_indices(spectrum, i, j, s)?;
    } else {
        check_indices(spectrum, i, s, s)?;
    }
    let j = if kind.general_j() { j } else { s };
    if kind == BoundKind::Thm2e3 && i != s {
        return Err(Error::Parameter(format!("thm2e3 concerns θ_s only, got i = {i}, s = {s}")));
    }
    let q = if kind.uses_quality() { q } else { 0.0 };
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Parameter(format!("quality parameter must lie in [0, 1), got {q}")));
    }
    let mu_ref = spectrum.mu(j - s + i)?;
    let mu_top = spectrum.mu(j - s + 1)?;
    let mu_low = spectrum.mu(j + 1)?;
    let mu_j = spectrum.mu(j)?;
    let mu_n = spectrum.mu_min;
    if !(theta_s0 > mu_low) || (j > s && theta_s0 > mu_j) {
        let upper = if j > s { format!("{mu_j}]") } else { format!("{mu_top}]") };
        return Err(Error::Precondition(format!(
            "{kind} needs θ_s⁽⁰⁾ in (μ_{} = {mu_low}, {upper}, got {theta_s0}",
            j + 1
        )));
    }
    let mut undefined = None;
    let (kappa, reference, lower, initial_ratio) = match kind {
        BoundKind::Neighbor => {
            let mu_next = spectrum.mu(i + 1)?;
            if (mu_ref - mu_next).abs() <= 1e-10 * mu_ref.abs() {
                undefined = Some(format!("μ_{i} = μ_{} (multiple eigenvalue)", i + 1));
            }
            (
                kappa_from(mu_next, mu_ref, mu_n)?,
                mu_ref,
                mu_low,
                distance_ratio(theta_s0, mu_ref, mu_low),
            )
        }
        BoundKind::Bpsde => {
            if !(mu_n > 0.0) {
                return Err(Error::Precondition("bpsde needs μ_n > 0 so that λ = 1/μ is defined".into()));
            }
            let (lr, ll, ln) = (1.0 / mu_ref, 1.0 / mu_low, 1.0 / mu_n);
            let v0 = 1.0 / theta_s0;
            (lr * (ln - ll) / (ll * (ln - lr)), lr, ll, (v0 - lr) / (ll - v0))
        }
        _ => (
            kappa_from(mu_low, mu_ref, mu_n)?,
            mu_ref,
            mu_low,
            distance_ratio(theta_s0, mu_ref, mu_low),
        ),
    };
    let factor = conv_factor(kappa, q);
    let (ratio_bounds, error_bounds) = if undefined.is_some() {
        (vec![], vec![])
    } else {
        let f2 = factor * factor;
        let mut r = Vec::with_capacity(steps + 1);
        let mut c = initial_ratio;
        for _ in 0..=steps {
            r.push(c);
            c *= f2;
        }
        let e = r.iter().map(|&c| ratio_to_error(c, reference, lower).abs()).collect();
        (r, e)
    };
    Ok(BoundCurve {
        kind,
        i,
        j,
        s,
        kappa,
        q,
        factor,
        initial_ratio,
        reference,
        lower,
        ratio_bounds,
        error_bounds,
        undefined,
    })
}

pub const BOUND_CSV_COLUMNS: &str = "kind,i,j,s,kappa,q,step,ratio_bound,error_bound";

/// Writes curves as CSV; undefined curves contribute a single row with
/// empty bound fields.
pub fn write_bound_csv(curves: &[BoundCurve], header: &[String], mut w: impl Write) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{BOUND_CSV_COLUMNS}")?;
    for c in curves {
        if !c.is_defined() {
            writeln!(w, "{},{},{},{},{:.17e},{:.17e},,,", c.kind, c.i, c.j, c.s, c.kappa, c.q)?;
            continue;
        }
        for (l, (r, e)) in c.ratio_bounds.iter().zip(&c.error_bounds).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{:.17e},{:.17e},{},{:.17e},{:.17e}",
                c.kind, c.i, c.j, c.s, c.kappa, c.q, l, r, e
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Example I spectrum (leading values only).
    fn example_one(n: usize) -> Spectrum {
        let mut mu: Vec<f64> = (1..=6).map(|i| 10.07 - 0.01 * i as f64).collect();
        mu.push(9.0);
        mu.push(9.0 - 8.0 / (n - 7) as f64);
        Spectrum {
            values: mu,
            vectors: None,
            residuals: vec![],
            n,
            mu_min: 1.0,
        }
    }

    #[test]
    fn example_one_kappa_and_factor() {
        let sp = example_one(6000);
        let k = kappa(&sp, 1, 6, 6).unwrap();
        assert!((k - 8.0 / 9.06).abs() < 1e-15);
        assert!((k - 0.883002).abs() < 5e-7);
        // κ/(2−κ) = 8/(18.12 − 8) = 8/10.12
        let f = conv_factor(k, 0.0);
        assert!((f - 8.0 / 10.12).abs() < 1e-15);
        assert!(f <= 0.80);
    }

    #[test]
    fn kappa_edge_values() {
        let sp = Spectrum {
            values: vec![3.0, 2.0, 2.0, 1.0],
            vectors: None,
            residuals: vec![],
            n: 5,
            mu_min: 1.0,
        };
        assert_eq!(kappa(&sp, 1, 3, 1).unwrap(), 0.0);
        assert_eq!(kappa(&sp, 1, 2, 1).unwrap(), 1.0);
        assert!(kappa(&sp, 2, 1, 3).is_err());
        let flat = Spectrum { mu_min: 3.0, ..sp };
        assert!(kappa(&flat, 1, 1, 1).is_err());
    }

    #[test]
    fn conv_factor_edges() {
        for q in [0.0, 0.3, 0.9] {
            assert!((conv_factor(1.0, q) - 1.0).abs() < 1e-15);
            assert!((conv_factor(0.0, q) - q).abs() < 1e-15);
        }
    }

    #[test]
    fn ratio_to_error_examples() {
        assert_eq!(ratio_to_error(0.0, 2.0, 1.0), 0.0);
        assert_eq!(ratio_to_error(1.0, 2.0, 1.0), 0.5);
        assert_eq!(ratio_to_error(3.0, 2.0, 1.0), 0.75);
        // the bound is attained: θ = μ_ref − e has ratio exactly c
        let e = ratio_to_error(0.37, 5.0, 2.0);
        assert!((distance_ratio(5.0 - e, 5.0, 2.0) - 0.37).abs() < 1e-14);
    }

    #[test]
    fn curve_shape() {
        let sp = example_one(6000);
        let theta0 = 9.5;
        let c0 = bound_curve(BoundKind::Thm2e1, &sp, 1, 6, 6, 0.0, theta0, 0).unwrap();
        assert_eq!(c0.ratio_bounds, vec![(10.06 - 9.5) / (9.5 - 9.0)]);
        let c = bound_curve(BoundKind::Thm2e1, &sp, 1, 6, 6, 0.0, theta0, 10).unwrap();
        let expect = c0.initial_ratio * (8.0f64 / 10.12).powi(20);
        assert!((c.ratio_bounds[10] - expect).abs() <= 1e-14 * expect);
        assert!(c.ratio_bounds.windows(2).all(|w| w[1] <= w[0]));
        // lm2e1 ignores q
        let l = bound_curve(BoundKind::Lm2e1, &sp, 1, 6, 6, 0.5, theta0, 10).unwrap();
        assert_eq!(l.ratio_bounds, c.ratio_bounds);
        assert!(bound_curve(BoundKind::Thm2e1, &sp, 1, 6, 6, 0.0, 8.9, 3).is_err());
        assert!(bound_curve(BoundKind::Thm2e1, &sp, 1, 6, 6, 1.0, 9.5, 3).is_err());
    }

    #[test]
    fn neighbor_separation_on_example_one() {
        let sp = example_one(6000);
        for i in 1..=5 {
            let c = bound_curve(BoundKind::Neighbor, &sp, i, 6, 6, 0.0, 9.5, 1).unwrap();
            assert!(c.factor >= 0.996, "i = {i}: {}", c.factor);
        }
        let c = bound_curve(BoundKind::Neighbor, &sp, 1, 6, 6, 0.0, 9.5, 1).unwrap();
        // κ = 9.05/9.06
        assert!((c.kappa - 9.05 / 9.06).abs() < 1e-14);
        let t = bound_curve(BoundKind::Thm2e1, &sp, 1, 6, 6, 0.0, 9.5, 1).unwrap();
        assert!(t.factor <= 0.80);
    }

    #[test]
    fn neighbor_coincides_with_thm2e1_at_i_equal_s() {
        let sp = example_one(500);
        for q in [0.0, 0.25] {
            let a = bound_curve(BoundKind::Neighbor, &sp, 6, 6, 6, q, 9.2, 15).unwrap();
            let b = bound_curve(BoundKind::Thm2e1, &sp, 6, 6, 6, q, 9.2, 15).unwrap();
            assert_eq!(a.ratio_bounds, b.ratio_bounds);
        }
    }

    #[test]
    fn neighbor_undefined_for_multiple_eigenvalue() {
        let sp = Spectrum {
            values: vec![5.0, 4.0, 3.0, 3.0, 2.0],
            vectors: None,
            residuals: vec![],
            n: 10,
            mu_min: 1.0,
        };
        let c = bound_curve(BoundKind::Neighbor, &sp, 3, 4, 4, 0.1, 2.5, 5).unwrap();
        assert!(!c.is_defined());
        assert!(c.ratio_bounds.is_empty());
        assert!(bound_curve(BoundKind::Neighbor, &sp, 2, 4, 4, 0.1, 2.5, 5).unwrap().is_defined());
    }

    #[test]
    fn thm2e3_matches_thm2e1_at_i_equal_s() {
        let sp = example_one(1000);
        let q = 0.31;
        let a = bound_curve(BoundKind::Thm2e3, &sp, 6, 6, 6, q, 9.4, 25).unwrap();
        let b = bound_curve(BoundKind::Thm2e1, &sp, 6, 6, 6, q, 9.4, 25).unwrap();
        for (x, y) in a.ratio_bounds.iter().zip(&b.ratio_bounds) {
            assert!((x - y).abs() <= 1e-14 * y.abs());
        }
        // L-fold product of the single-step factor
        let single = conv_factor(a.kappa, q).powi(2);
        let mut r = a.initial_ratio;
        for l in 0..=25 {
            assert!((a.ratio_bounds[l] - r).abs() <= 1e-14 * r);
            r *= single;
        }
    }

    #[test]
    fn bpsde_is_thm2e2_in_reciprocal_variables() {
        let sp = Spectrum {
            values: vec![1.0, 0.9, 0.5, 0.45, 0.2, 0.19],
            vectors: None,
            residuals: vec![],
            n: 50,
            mu_min: 0.01,
        };
        let theta0 = 0.3;
        for i in 1..=2 {
            let b = bound_curve(BoundKind::Bpsde, &sp, i, 4, 2, 0.2, theta0, 10).unwrap();
            let t = bound_curve(BoundKind::Thm2e2, &sp, i, 4, 2, 0.2, theta0, 10).unwrap();
            assert!((b.kappa - t.kappa).abs() < 1e-14);
            // ratios differ by λ_{j−s+i}/λ_{j+1} at every step
            let scale = b.reference / b.lower;
            for (x, y) in b.ratio_bounds.iter().zip(&t.ratio_bounds) {
                assert!((x - scale * y).abs() <= 1e-13 * x.abs());
            }
            let th = 0.35;
            assert!((b.observed_ratio(th) - scale * t.observed_ratio(th)).abs() < 1e-13);
        }
        assert!(bound_curve(BoundKind::Thm2e2, &sp, 1, 4, 2, 0.2, 0.5, 10).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.name().parse::<BoundKind>().unwrap(), k);
        }
        assert!("thm9".parse::<BoundKind>().is_err());
    }

    #[test]
    fn bound_csv_rows() {
        let sp = example_one(100);
        let c = bound_curve(BoundKind::Thm2e1, &sp, 2, 6, 6, 0.1, 9.5, 2).unwrap();
        let mut buf = Vec::new();
        write_bound_csv(&[c], &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("thm2e1,2,6,6,"));
    }

    proptest! {
        #[test]
        fn conv_factor_monotone(k in 0.01f64..0.99, q in 0.01f64..0.98, dk in 1e-3f64..1e-2, dq in 1e-3f64..1e-2) {
            prop_assume!(k + dk < 1.0 && q + dq < 1.0);
            prop_assert!(conv_factor(k, q + dq) > conv_factor(k, q) + 1e-12 * 0.0);
            prop_assert!(conv_factor(k, q + dq) - conv_factor(k, q) > 1e-12);
            prop_assert!(conv_factor(k + dk, q) - conv_factor(k, q) > 1e-12);
            prop_assert!(conv_factor(k, q) < 1.0);
        }
    }
}
