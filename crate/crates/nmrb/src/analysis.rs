//! Curve analysis: exponential fitting, RB non-Markovianity norms,
//! memory-length estimation, and the coherent/dissipative diagnosis.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::asf::{ASFCurve, AsfPoint, CurveMeta, EngineKind};
use crate::error::{NmrbError, Result};

/// Least-squares fit of F(m) = A·p^m + B.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub rms_residual: f64,
    pub max_residual: f64,
    pub converged: bool,
}

impl ExpFit {
    pub fn eval(&self, m: usize) -> f64 {
        self.a * self.p.powi(m as i32) + self.b
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemoryScanReport {
    pub ell_hat: usize,
    pub matched_pattern: Vec<usize>,
    pub p_reference: f64,
    pub p_matched: f64,
    pub tolerance_used: f64,
    pub candidates: Vec<(Vec<usize>, f64)>,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceDiagnosis {
    Coherent,
    Dissipative,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineConstraint {
    AEqB,
    APlusBEq1,
    Custom { a: f64, b: f64 },
}

fn window_points(curve: &ASFCurve, window: Option<(usize, usize)>) -> Vec<&AsfPoint> {
    match window {
        Some((lo, hi)) => curve
            .points
            .iter()
            .filter(|p| p.m >= lo && p.m <= hi)
            .collect(),
        None => curve.points.iter().collect(),
    }
}

fn residual_stats(pts: &[&AsfPoint], a: f64, p: f64, b: f64) -> (f64, f64) {
    let mut sq = 0.0;
    let mut max = 0.0f64;
    for pt in pts {
        let r = (a * p.powi(pt.m as i32) + b - pt.value).abs();
        sq += r * r;
        max = max.max(r);
    }
    ((sq / pts.len() as f64).sqrt(), max)
}

/// Fit A·p^m + B over an optional inclusive m-window.
///
/// B is initialized just below the minimum value, (A, p) by linear
/// regression on log(F − B₀), then all three parameters are refined by a
/// Levenberg-damped Gauss–Newton iteration. Points with a standard error
/// are weighted by 1/stderr²; exact points get unit weight.
pub fn fit_exponential(curve: &ASFCurve, m_window: Option<(usize, usize)>) -> Result<ExpFit> {
    let pts = window_points(curve, m_window);
    if pts.len() < 4 {
        return Err(NmrbError::Invalid(format!(
            "fit_exponential: {} points in window, need ≥ 4",
            pts.len()
        )));
    }
    let vmin = pts.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let vmax = pts.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    if vmax - vmin < 1e-12 {
        // flat curve: p is unidentifiable
        let mean = pts.iter().map(|p| p.value).sum::<f64>() / pts.len() as f64;
        let (rms, max) = residual_stats(&pts, 0.0, 1.0, mean);
        return Ok(ExpFit {
            a: 0.0,
            p: 1.0,
            b: mean,
            rms_residual: rms,
            max_residual: max,
            converged: false,
        });
    }
    let margin = (1e-3 * (vmax - vmin)).max(1e-9);
    let b0 = vmin - margin;
    // log-linear initialization: log(F − B₀) = log A + m·log p
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for pt in &pts {
        let y = (pt.value - b0).ln();
        let x = pt.m as f64;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1.0;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let mut p = slope.exp().clamp(1e-6, 1.5);

    let weights: Vec<f64> = pts
        .iter()
        .map(|pt| match pt.stderr {
            Some(s) if s > 0.0 => 1.0 / s,
            _ => 1.0,
        })
        .collect();
    // for fixed p, the optimal (A, B) solve a weighted 2×2 linear system;
    // the damped Gauss–Newton iteration then only has to move p
    let linear = |p: f64| -> (f64, f64) {
        let (mut sww, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (pt, w) in pts.iter().zip(&weights) {
            let w2 = w * w;
            let x = p.powi(pt.m as i32);
            sww += w2;
            swx += w2 * x;
            swxx += w2 * x * x;
            swy += w2 * pt.value;
            swxy += w2 * x * pt.value;
        }
        let det = swxx * sww - swx * swx;
        if det.abs() < 1e-300 {
            return (0.0, swy / sww);
        }
        let a = (swxy * sww - swx * swy) / det;
        let b = (swxx * swy - swx * swxy) / det;
        (a, b)
    };
    let cost = |p: f64| -> f64 {
        let (a, b) = linear(p);
        pts.iter()
            .zip(&weights)
            .map(|(pt, w)| {
                let r = w * (a * p.powi(pt.m as i32) + b - pt.value);
                r * r
            })
            .sum()
    };
    let mut converged = false;
    let mut s_cur = cost(p);
    for _ in 0..200 {
        let (a_cur, b_cur) = linear(p);
        // Gauss–Newton on the profiled 1-D problem: the raw ∂r/∂p must be
        // projected off span{w·p^m, w·1}, because the inner linear solve
        // absorbs those components of any parameter change
        let np = pts.len();
        let mut jac = vec![0.0; np];
        let mut u1 = vec![0.0; np];
        let mut res = vec![0.0; np];
        for (i, (pt, w)) in pts.iter().zip(&weights).enumerate() {
            let pm = p.powi(pt.m as i32);
            jac[i] = w * a_cur * pt.m as f64 * pm / p;
            u1[i] = w * pm;
            res[i] = w * (a_cur * pm + b_cur - pt.value);
        }
        let (mut g11, mut g12, mut g22, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, w) in weights.iter().enumerate() {
            g11 += u1[i] * u1[i];
            g12 += u1[i] * w;
            g22 += w * w;
            c1 += u1[i] * jac[i];
            c2 += w * jac[i];
        }
        let det = g11 * g22 - g12 * g12;
        let (al, be) = if det.abs() > 1e-300 {
            ((c1 * g22 - g12 * c2) / det, (g11 * c2 - g12 * c1) / det)
        } else {
            (0.0, 0.0)
        };
        let (mut jtr, mut jtj) = (0.0, 0.0);
        for (i, w) in weights.iter().enumerate() {
            let je = jac[i] - al * u1[i] - be * w;
            jtr += je * res[i];
            jtj += je * je;
        }
        if jtj <= 1e-300 {
            converged = true;
            break;
        }
        let mut step = -jtr / jtj;
        // damp until the step improves the profiled cost
        let mut accepted = false;
        for _ in 0..60 {
            let cand = p + step;
            if cand > 0.0 {
                let s_new = cost(cand);
                if s_new <= s_cur {
                    p = cand;
                    s_cur = s_new;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true; // no descent direction left at double precision
            break;
        }
        if step.abs() < 1e-12 {
            converged = true;
            break;
        }
    }
    let (a, b) = linear(p);
    let (rms, max) = residual_stats(&pts, a, p, b);
    Ok(ExpFit {
        a,
        p,
        b,
        rms_residual: rms,
        max_residual: max,
        converged,
    })
}

/// N_q = ‖F − F_ref‖_q over a shared m grid; q = ∞ gives the max deviation.
pub fn rb_nonmarkovianity(curve: &ASFCurve, reference: &ASFCurve, q: f64) -> Result<f64> {
    if curve.points.len() != reference.points.len()
        || curve
            .points
            .iter()
            .zip(&reference.points)
            .any(|(a, b)| a.m != b.m)
    {
        return Err(NmrbError::Invalid(
            "rb_nonmarkovianity: curves live on different m grids".into(),
        ));
    }
    if !(q >= 1.0) {
        return Err(NmrbError::Invalid(format!("invalid norm order q = {q}")));
    }
    let deltas = curve
        .points
        .iter()
        .zip(&reference.points)
        .map(|(a, b)| (a.value - b.value).abs());
    if q.is_infinite() {
        Ok(deltas.fold(0.0, f64::max))
    } else {
        Ok(deltas.map(|d| d.powf(q)).sum::<f64>().powf(1.0 / q))
    }
}

/// Longest suffix of the curve whose log-linear fit of log(F − B̂) has
/// R² ≥ 0.999, returned as an inclusive (m_lo, m_hi) window.
pub fn auto_reference_window(curve: &ASFCurve) -> Result<(usize, usize)> {
    let full = fit_exponential(curve, None)?;
    let b_hat = full.b;
    let pts = &curve.points;
    let m_hi = pts.last().unwrap().m;
    let mut best: Option<(usize, usize)> = None;
    for start in 0..pts.len() {
        let suffix = &pts[start..];
        if suffix.len() < 4 {
            break;
        }
        let data: Vec<(f64, f64)> = suffix
            .iter()
            .filter(|p| p.value - b_hat > 0.0)
            .map(|p| (p.m as f64, (p.value - b_hat).ln()))
            .collect();
        if data.len() < 4 {
            continue;
        }
        let n = data.len() as f64;
        let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
        let my = data.iter().map(|d| d.1).sum::<f64>() / n;
        let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
        let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
        let syy: f64 = data.iter().map(|d| (d.1 - my).powi(2)).sum();
        let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
        if r2 >= 0.999 {
            best = Some((suffix[0].m, m_hi));
            break; // earliest qualifying start = longest suffix
        }
    }
    best.ok_or_else(|| {
        NmrbError::Invalid("auto_reference_window: no suffix with R² ≥ 0.999".into())
    })
}

/// Estimate the noise memory length from a family of identity-fixed curves.
///
/// The empty pattern must map to the unmodified curve; its tail over
/// `reference_window` defines p_reference. Every pattern (including the
/// empty one) is then fitted over the short-m grid shared with the pattern
/// family, and the smallest pattern size k whose decay rate matches
/// p_reference within rel_tol gives ell_hat = k + 1.
pub fn memory_length_scan(
    curves: &BTreeMap<BTreeSet<usize>, ASFCurve>,
    reference_window: (usize, usize),
    rel_tol: f64,
) -> Result<MemoryScanReport> {
    let baseline = curves
        .get(&BTreeSet::new())
        .ok_or_else(|| NmrbError::Invalid("memory_length_scan: missing unmodified curve".into()))?;
    if curves.len() < 2 {
        return Err(NmrbError::Invalid(
            "memory_length_scan: need at least one identity-fixed curve".into(),
        ));
    }
    if !(rel_tol > 0.0) {
        return Err(NmrbError::Invalid(format!("invalid rel_tol {rel_tol}")));
    }
    let p_reference = fit_exponential(baseline, Some(reference_window))?.p;
    // candidate fits are restricted to the short-m regime probed by the
    // identity-fixed curves, so the k = 0 candidate is comparable to them
    let m_cut = curves
        .iter()
        .filter(|(pat, _)| !pat.is_empty())
        .flat_map(|(_, c)| c.points.iter().map(|p| p.m))
        .max()
        .unwrap();
    let mut by_size: Vec<(&BTreeSet<usize>, f64)> = Vec::new();
    for (pattern, curve) in curves {
        if pattern.is_empty() && curve.points.iter().filter(|p| p.m <= m_cut).count() < 4 {
            // unmodified curve has no short-m points to compare at k = 0
            continue;
        }
        let fit = fit_exponential(curve, Some((0, m_cut)))?;
        by_size.push((pattern, fit.p));
    }
    by_size.sort_by_key(|(pat, _)| (pat.len(), pat.iter().copied().collect::<Vec<_>>()));
    let candidates: Vec<(Vec<usize>, f64)> = by_size
        .iter()
        .map(|(pat, p)| (pat.iter().copied().collect(), *p))
        .collect();
    let tolerance = rel_tol * p_reference.abs();
    let matched = by_size
        .iter()
        .find(|(_, p)| (p - p_reference).abs() <= tolerance);
    match matched {
        Some((pattern, p)) => Ok(MemoryScanReport {
            ell_hat: pattern.len() + 1,
            matched_pattern: pattern.iter().copied().collect(),
            p_reference,
            p_matched: *p,
            tolerance_used: tolerance,
            candidates,
            converged: true,
        }),
        None => {
            let (pattern, p) = by_size
                .iter()
                .min_by(|a, b| {
                    (a.1 - p_reference)
                        .abs()
                        .total_cmp(&(b.1 - p_reference).abs())
                })
                .unwrap();
            Ok(MemoryScanReport {
                ell_hat: pattern.len() + 1,
                matched_pattern: pattern.iter().copied().collect(),
                p_reference,
                p_matched: *p,
                tolerance_used: tolerance,
                candidates,
                converged: false,
            })
        }
    }
}

/// Build the Markovianized curve A·p^m + B on the given grid, with A and B
/// pinned down by a SPAM constraint (A + B = 1 is imposed in both named
/// variants; A_eq_B keeps the fitted asymptote B, A_plus_B_eq_1 keeps the
/// fitted amplitude A).
pub fn markovianized_baseline(
    fit: &ExpFit,
    constraint: BaselineConstraint,
    m_values: &[usize],
) -> Result<ASFCurve> {
    if !(fit.p > 0.0) || !fit.p.is_finite() {
        return Err(NmrbError::Invalid(format!("invalid fitted p = {}", fit.p)));
    }
    let (a, b) = match constraint {
        BaselineConstraint::AEqB => (1.0 - fit.b, fit.b),
        BaselineConstraint::APlusBEq1 => (fit.a, 1.0 - fit.a),
        BaselineConstraint::Custom { a, b } => (a, b),
    };
    let points = m_values
        .iter()
        .map(|&m| AsfPoint {
            m,
            value: a * fit.p.powi(m as i32) + b,
            stderr: None,
        })
        .collect();
    ASFCurve::new(
        points,
        CurveMeta {
            model_id: format!("markovianized[{constraint:?}]"),
            engine: EngineKind::Markovianized,
            seed: None,
            samples: None,
            identity_pattern: Vec::new(),
        },
    )
}

/// Classify interleaved-identity scan results as coherent or dissipative
/// noise. `scan` is ordered by interleaving depth, baseline first.
///
/// Coherent noise keeps every curve visibly non-exponential (all fit
/// residuals above the threshold); dissipative noise is damped away by the
/// extra identities (residuals decay with depth, ending below threshold).
pub fn coherence_diagnosis(scan: &[ASFCurve], residual_threshold: f64) -> Result<CoherenceDiagnosis> {
    if scan.len() < 3 {
        return Ok(CoherenceDiagnosis::Inconclusive);
    }
    let residuals: Vec<f64> = scan
        .iter()
        .map(|c| fit_exponential(c, None).map(|f| f.max_residual))
        .collect::<Result<_>>()?;
    if residuals.iter().all(|&r| r > residual_threshold) {
        return Ok(CoherenceDiagnosis::Coherent);
    }
    let last_below = *residuals.last().unwrap() < residual_threshold;
    let all_below = residuals.iter().all(|&r| r < residual_threshold);
    // monotone trend with 20% slack to tolerate sampling noise
    let trending_down = residuals
        .windows(2)
        .all(|w| w[1] <= 1.2 * w[0]);
    if last_below && (all_below || trending_down) {
        return Ok(CoherenceDiagnosis::Dissipative);
    }
    Ok(CoherenceDiagnosis::Inconclusive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synth(a: f64, p: f64, b: f64, ms: &[usize]) -> ASFCurve {
        let points = ms
            .iter()
            .map(|&m| AsfPoint {
                m,
                value: a * p.powi(m as i32) + b,
                stderr: None,
            })
            .collect();
        ASFCurve::new(
            points,
            CurveMeta {
                model_id: "synthetic".into(),
                engine: EngineKind::Analytical,
                seed: None,
                samples: None,
                identity_pattern: Vec::new(),
            },
        )
        .unwrap()
    }

    fn grid(lo: usize, hi: usize) -> Vec<usize> {
        (lo..=hi).collect()
    }

    #[test]
    fn exact_exponential_round_trip() {
        let c = synth(0.5, 0.97, 0.5, &grid(1, 30));
        let fit = fit_exponential(&c, None).unwrap();
        assert!(fit.converged);
        assert!((fit.a - 0.5).abs() < 1e-8);
        assert!((fit.p - 0.97).abs() < 1e-8);
        assert!((fit.b - 0.5).abs() < 1e-8);
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let c = synth(0.0, 0.9, 0.73, &grid(1, 10));
        let fit = fit_exponential(&c, None).unwrap();
        assert!(!fit.converged);
        assert!(fit.a.abs() < 1e-9);
        assert!((fit.b - 0.73).abs() < 1e-9);
    }

    #[test]
    fn window_restricts_the_fit() {
        // tail is exponential, head is contaminated
        let mut c = synth(0.6, 0.95, 0.4, &grid(1, 30));
        for p in c.points.iter_mut().filter(|p| p.m <= 5) {
            p.value += 0.05;
        }
        let fit = fit_exponential(&c, Some((10, 30))).unwrap();
        assert!((fit.p - 0.95).abs() < 1e-7);
    }

    #[test]
    fn weighted_fit_uses_stderr() {
        let mut c = synth(0.5, 0.96, 0.5, &grid(1, 20));
        // corrupt one point but give it a huge error bar
        for p in c.points.iter_mut() {
            p.stderr = Some(if p.m == 10 { 1e3 } else { 1e-6 });
        }
        c.points[9].value += 0.2;
        let fit = fit_exponential(&c, None).unwrap();
        assert!((fit.p - 0.96).abs() < 1e-6);
    }

    #[test]
    fn nonmarkovianity_basics() {
        let a = synth(0.5, 0.95, 0.5, &grid(1, 20));
        let b = synth(0.5, 0.90, 0.5, &grid(1, 20));
        assert!(rb_nonmarkovianity(&a, &a, 1.0).unwrap() < 1e-15);
        assert!(rb_nonmarkovianity(&a, &a, f64::INFINITY).unwrap() < 1e-15);
        let n1 = rb_nonmarkovianity(&a, &b, 1.0).unwrap();
        let n2 = rb_nonmarkovianity(&a, &b, 2.0).unwrap();
        let ninf = rb_nonmarkovianity(&a, &b, f64::INFINITY).unwrap();
        assert!(n1 >= n2 && n2 >= ninf && ninf > 0.0);
        let short = synth(0.5, 0.95, 0.5, &grid(1, 10));
        assert!(rb_nonmarkovianity(&a, &short, 1.0).is_err());
    }

    #[test]
    fn auto_window_finds_clean_tail() {
        // strong fast-decaying transient on top of a clean exponential tail
        let mut c = synth(0.6, 0.93, 0.4, &grid(1, 40));
        for p in c.points.iter_mut() {
            p.value += 0.5 * 0.2f64.powi(p.m as i32);
        }
        let (lo, hi) = auto_reference_window(&c).unwrap();
        assert_eq!(hi, 40);
        assert!(lo > 8, "window starts at {lo}, inside the transient");
        let fit = fit_exponential(&c, Some((lo, hi))).unwrap();
        assert!((fit.p - 0.93).abs() < 1e-6);

        // a clean exponential keeps (almost) the whole curve
        let clean = synth(0.6, 0.93, 0.4, &grid(1, 40));
        let (lo, hi) = auto_reference_window(&clean).unwrap();
        assert_eq!((lo, hi), (1, 40));
    }

    #[test]
    fn markovian_scan_reports_ell_one() {
        let long = synth(0.5, 0.95, 0.5, &grid(1, 30));
        let mut curves = BTreeMap::new();
        curves.insert(BTreeSet::new(), long);
        for k in 1..=3usize {
            // identity-fixed Markovian curves share the same p
            curves.insert(
                (2..=k + 1).collect(),
                synth(0.5 * 0.95f64.powi(k as i32), 0.95, 0.5, &grid(1, 5)),
            );
        }
        let report = memory_length_scan(&curves, (10, 30), 0.01).unwrap();
        assert!(report.converged);
        assert_eq!(report.ell_hat, 1);
        assert!(report.matched_pattern.is_empty());
        assert!((report.p_matched - report.p_reference).abs() <= report.tolerance_used);
    }

    #[test]
    fn synthetic_scan_matches_at_k_three() {
        // reference tail decays at 0.95; patterns of size < 3 fit different
        // rates, size 3 matches exactly
        let long = synth(0.6, 0.95, 0.4, &grid(10, 40));
        let mut curves = BTreeMap::new();
        curves.insert(BTreeSet::new(), long);
        let rates = [0.90, 0.92, 0.95, 0.95];
        for (i, &r) in rates.iter().enumerate() {
            let k = i + 1;
            curves.insert((2..=k + 1).collect(), synth(0.6, r, 0.4, &grid(1, 6)));
        }
        let report = memory_length_scan(&curves, (10, 40), 0.01).unwrap();
        assert!(report.converged);
        assert_eq!(report.ell_hat, 4);
        assert_eq!(report.matched_pattern, vec![2, 3, 4]);
    }

    #[test]
    fn scan_ignores_points_beyond_reference_window() {
        let mut curves = BTreeMap::new();
        curves.insert(BTreeSet::new(), synth(0.6, 0.95, 0.4, &grid(1, 40)));
        curves.insert(
            [2usize].into_iter().collect(),
            synth(0.6, 0.90, 0.4, &grid(1, 5)),
        );
        let r1 = memory_length_scan(&curves, (10, 40), 0.01).unwrap();
        // extend the baseline beyond the window with consistent tail points
        curves.insert(BTreeSet::new(), synth(0.6, 0.95, 0.4, &grid(1, 60)));
        let r2 = memory_length_scan(&curves, (10, 40), 0.01).unwrap();
        assert_eq!(r1.ell_hat, r2.ell_hat);
        assert!((r1.p_reference - r2.p_reference).abs() < 1e-10);
    }

    #[test]
    fn baseline_constraints() {
        let fit = ExpFit {
            a: 0.7847,
            p: 0.9325,
            b: 0.4915,
            rms_residual: 0.0,
            max_residual: 0.0,
            converged: true,
        };
        let ms = grid(1, 100);
        let c = markovianized_baseline(&fit, BaselineConstraint::AEqB, &ms).unwrap();
        let a = 1.0 - fit.b;
        assert!((a - 0.5085).abs() < 1e-12);
        assert!((c.points[0].value - (a * fit.p + fit.b)).abs() < 1e-15);
        // large-m limit is the asymptote
        let tail = markovianized_baseline(&fit, BaselineConstraint::AEqB, &[2000]).unwrap();
        assert!((tail.points[0].value - fit.b).abs() < 1e-9);
        let pure =
            markovianized_baseline(&fit, BaselineConstraint::Custom { a: 1.0, b: 0.0 }, &[3])
                .unwrap();
        assert!((pure.points[0].value - fit.p.powi(3)).abs() < 1e-15);
        let c2 = markovianized_baseline(&fit, BaselineConstraint::APlusBEq1, &ms).unwrap();
        assert!((c2.points[0].value - (fit.a * fit.p + (1.0 - fit.a))).abs() < 1e-15);
    }

    #[test]
    fn diagnosis_markovian_is_dissipative() {
        let scan: Vec<ASFCurve> = (0..4)
            .map(|k| synth(0.5, 0.95f64.powi(k + 1), 0.5, &grid(1, 20)))
            .collect();
        assert_eq!(
            coherence_diagnosis(&scan, 1e-6).unwrap(),
            CoherenceDiagnosis::Dissipative
        );
    }

    #[test]
    fn diagnosis_oscillating_is_coherent() {
        let scan: Vec<ASFCurve> = (0..4)
            .map(|k| {
                let mut c = synth(0.5, 0.95, 0.5, &grid(1, 20));
                for p in c.points.iter_mut() {
                    // undamped oscillation survives every interleaving depth
                    p.value += 0.05 * ((k as f64 + 1.0) * p.m as f64).cos();
                }
                c
            })
            .collect();
        assert_eq!(
            coherence_diagnosis(&scan, 1e-3).unwrap(),
            CoherenceDiagnosis::Coherent
        );
    }

    #[test]
    fn diagnosis_single_pattern_is_inconclusive() {
        let scan = vec![synth(0.5, 0.95, 0.5, &grid(1, 20))];
        assert_eq!(
            coherence_diagnosis(&scan, 1e-6).unwrap(),
            CoherenceDiagnosis::Inconclusive
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn fit_round_trips_random_exponentials(
            a in 0.05f64..1.0,
            p in 0.8f64..0.999,
            b in 0.0f64..0.6,
        ) {
            let c = synth(a, p, b, &grid(1, 30));
            let fit = fit_exponential(&c, None).unwrap();
            prop_assert!((fit.a - a).abs() < 1e-8, "A {} vs {a}", fit.a);
            prop_assert!((fit.p - p).abs() < 1e-8, "p {} vs {p}", fit.p);
            prop_assert!((fit.b - b).abs() < 1e-8, "B {} vs {b}", fit.b);
        }

        #[test]
        fn nonmarkovianity_is_a_norm(
            xs in prop::collection::vec(0.0f64..1.0, 12),
            ys in prop::collection::vec(0.0f64..1.0, 12),
            zs in prop::collection::vec(0.0f64..1.0, 12),
            q in prop_oneof![1.0f64..8.0, Just(f64::INFINITY)],
        ) {
            let ms = grid(1, 12);
            let mk = |vals: &[f64]| {
                let points = ms.iter().zip(vals).map(|(&m, &v)| AsfPoint { m, value: v, stderr: None }).collect();
                ASFCurve::new(points, CurveMeta {
                    model_id: "prop".into(),
                    engine: EngineKind::Analytical,
                    seed: None,
                    samples: None,
                    identity_pattern: Vec::new(),
                }).unwrap()
            };
            let (cx, cy, cz) = (mk(&xs), mk(&ys), mk(&zs));
            let dxy = rb_nonmarkovianity(&cx, &cy, q).unwrap();
            let dyz = rb_nonmarkovianity(&cy, &cz, q).unwrap();
            let dxz = rb_nonmarkovianity(&cx, &cz, q).unwrap();
            prop_assert!(dxy >= 0.0);
            prop_assert!(dxz <= dxy + dyz + 1e-12);
            let zero = rb_nonmarkovianity(&cx, &cx, q).unwrap();
            prop_assert!(zero == 0.0);
        }

        #[test]
        fn nonmarkovianity_monotone_in_q(
            xs in prop::collection::vec(0.0f64..1.0, 10),
            ys in prop::collection::vec(0.0f64..1.0, 10),
            q1 in 1.0f64..6.0,
            dq in 0.0f64..6.0,
        ) {
            let ms = grid(1, 10);
            let mk = |vals: &[f64]| {
                let points = ms.iter().zip(vals).map(|(&m, &v)| AsfPoint { m, value: v, stderr: None }).collect();
                ASFCurve::new(points, CurveMeta {
                    model_id: "prop".into(),
                    engine: EngineKind::Analytical,
                    seed: None,
                    samples: None,
                    identity_pattern: Vec::new(),
                }).unwrap()
            };
            let (cx, cy) = (mk(&xs), mk(&ys));
            let lo = rb_nonmarkovianity(&cx, &cy, q1 + dq).unwrap();
            let hi = rb_nonmarkovianity(&cx, &cy, q1).unwrap();
            prop_assert!(lo <= hi + 1e-12);
            let inf = rb_nonmarkovianity(&cx, &cy, f64::INFINITY).unwrap();
            prop_assert!(inf <= lo + 1e-12);
        }
    }
}
