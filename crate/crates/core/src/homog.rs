//! Pseudo-distance `γ` and homogeneous-space diagnostics.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::{adapted_coords, BallKind, ball_volume, sample_polydisc, PolyMap, PseudoBall, VolumeEstimate};
use crate::domains::{Frame, ModelDomain, Point, Provenance};
use crate::error::{FtlError, Result};
use crate::fit::log_grid;
use crate::weights::FrameLists;

/// Chooses the frame used at a center and scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameProvider {
    Canonical,
    LeviEigen,
}

impl FrameProvider {
    /// Both providers recombine the canonical frame with constants, independently of `δ`.
    pub fn frame(&self, d: &ModelDomain, p: &[C64], _delta: f64) -> Frame {
        match self {
            FrameProvider::Canonical => d.tangent_frame(),
            FrameProvider::LeviEigen => d.levi_eigen_frame(p),
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            FrameProvider::Canonical => Provenance::Canonical,
            FrameProvider::LeviEigen => Provenance::LeviEigen,
        }
    }
}

/// Polydisc balls around one center for every `δ` (frames here do not depend on `δ`).
#[derive(Clone, Debug)]
pub struct BallFamily {
    pub center: Point,
    pub frame: Frame,
    pub map: PolyMap,
    lists: FrameLists,
}

impl BallFamily {
    pub fn new(d: &ModelDomain, provider: FrameProvider, p: &[C64]) -> Result<BallFamily> {
        let frame = provider.frame(d, p, 1.0);
        let map = adapted_coords(&frame, d, p, d.m)?;
        let lists = FrameLists::compute(&frame, p, d.m)?;
        Ok(BallFamily { center: p.to_vec(), frame, map, lists })
    }

    pub fn radii(&self, delta: f64, c: f64) -> Vec<f64> {
        self.lists.slot_weights(delta).iter().map(|f| if *f > 0.0 { c / f.sqrt() } else { f64::INFINITY }).collect()
    }

    pub fn contains(&self, q: &[C64], delta: f64, c: f64) -> bool {
        let w = self.map.apply(q);
        w.iter().zip(self.radii(delta, c)).all(|(x, r)| x.norm() < r)
    }

    pub fn ball(&self, d: &ModelDomain, delta: f64, c: f64) -> Result<PseudoBall> {
        PseudoBall::with_map(&self.frame, d, &self.center, delta, c, self.map.clone(), BallKind::PolydiscPullback)
    }

    /// Boundary point of the ball with tangential chart coordinates `zt` and `Im Zₙ = y`.
    pub fn boundary_point(&self, d: &ModelDomain, zt: &[C64], y: f64) -> Option<Point> {
        let at = |x: f64| -> f64 {
            let mut zz = zt.to_vec();
            zz.push(C64::new(x, y));
            d.eval_rho(&self.map.apply_inverse(&zz))
        };
        // ρ increases along Re Zₙ (the normal points outward); bracket then bisect
        let mut h = 1e-3 * (y.abs() + zt.iter().map(|z| z.norm()).sum::<f64>()).max(1e-300);
        let (mut lo, mut hi) = (-h, h);
        let mut tries = 0;
        while at(lo) > 0.0 {
            lo -= h;
            h *= 2.0;
            tries += 1;
            if tries > 200 {
                return None;
            }
        }
        h = (hi - lo).abs();
        tries = 0;
        while at(hi) < 0.0 {
            hi += h;
            h *= 2.0;
            tries += 1;
            if tries > 200 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if at(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut zz = zt.to_vec();
        zz.push(C64::new(0.5 * (lo + hi), y));
        Some(self.map.apply_inverse(&zz))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaResult {
    pub value: f64,
    /// Membership changed back to true below the first failing probe.
    pub non_monotone: bool,
    /// Final bisection bracket `(fails, holds)`.
    pub bracket: (f64, f64),
}

/// Number of decreasing probes before bisection.
pub const GAMMA_PROBES: usize = 32;

/// `γ(p,q) = inf{δ : q ∈ B^c(p,δ)}` on a family of balls centered at `p`.
pub fn gamma_in(family: &BallFamily, q: &[C64], c: f64, delta0: f64, delta_min: f64, tol: f64) -> GammaResult {
    if family.center.iter().zip(q).all(|(a, b)| a == b) {
        return GammaResult { value: 0.0, non_monotone: false, bracket: (0.0, 0.0) };
    }
    if !family.contains(q, delta0, c) {
        return GammaResult { value: f64::INFINITY, non_monotone: false, bracket: (delta0, f64::INFINITY) };
    }
    let probes = log_grid(delta0, delta_min, GAMMA_PROBES);
    let flags: Vec<bool> = probes.iter().map(|&dl| family.contains(q, dl, c)).collect();
    let first_fail = flags.iter().position(|f| !f);
    let Some(ff) = first_fail else {
        return GammaResult { value: delta_min, non_monotone: false, bracket: (0.0, delta_min) };
    };
    let non_monotone = flags[ff..].iter().any(|&f| f);
    let (mut lo, mut hi) = (probes[ff], probes[ff - 1]);
    while (hi - lo) > tol * hi {
        let mid = (lo * hi).sqrt();
        if family.contains(q, mid, c) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    GammaResult { value: hi, non_monotone, bracket: (lo, hi) }
}

pub fn gamma(d: &ModelDomain, provider: FrameProvider, p: &[C64], q: &[C64], c: f64, tol: f64) -> Result<GammaResult> {
    let fam = BallFamily::new(d, provider, p)?;
    Ok(gamma_in(&fam, q, c, 1.0, 1e-16, tol))
}

/// Grid of candidate engulfing constants in `[1, 64]`.
pub fn engulfing_grid() -> Vec<f64> {
    (0..=48).map(|k| 2f64.powf(k as f64 / 8.0)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EngulfingResult {
    pub constant: f64,
    pub centers: usize,
    pub points_per_center: usize,
    /// Some sampled point needed more than the largest grid value.
    pub diverged: bool,
}

/// Smallest `C` such that sampled points of `B(q,δ)` lie in `B(p,Cδ)` for sampled `q ∈ B(p,δ) ∩ ∂Ω`.
pub fn engulfing_constant(
    d: &ModelDomain,
    provider: FrameProvider,
    p: &[C64],
    delta: f64,
    c: f64,
    centers: usize,
    points: usize,
    seed: u64,
) -> Result<EngulfingResult> {
    let fam = BallFamily::new(d, provider, p)?;
    let radii = fam.radii(delta, c);
    let n = p.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut qs: Vec<Point> = vec![p.to_vec()];
    let mut guard = 0;
    while qs.len() < centers && guard < 50 * centers {
        guard += 1;
        let zt: Vec<C64> = sample_polydisc(&mut rng, &radii[..n - 1]);
        let y = rng.gen_range(-0.9..0.9) * radii[n - 1];
        if let Some(q) = fam.boundary_point(d, &zt, y) {
            if fam.contains(&q, delta, c) {
                qs.push(q);
            }
        }
    }
    let grid = engulfing_grid();
    let per: Vec<Result<(f64, bool)>> = qs
        .par_iter()
        .enumerate()
        .map(|(k, q)| {
            let fq = BallFamily::new(d, provider, q)?;
            let rq = fq.radii(delta, c);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + k as u64));
            let pts: Vec<Point> = (0..points).map(|_| fq.map.apply_inverse(&sample_polydisc(&mut rng, &rq))).collect();
            for &cc in &grid {
                if pts.iter().all(|w| fam.contains(w, cc * delta, c)) {
                    return Ok((cc, false));
                }
            }
            Ok((f64::INFINITY, true))
        })
        .collect();
    let mut constant = 1.0f64;
    let mut diverged = false;
    for r in per {
        let (cc, dv) = r?;
        constant = constant.max(cc);
        diverged |= dv;
    }
    Ok(EngulfingResult { constant, centers: qs.len(), points_per_center: points, diverged })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingResult {
    pub ratio: f64,
    pub small: VolumeEstimate,
    pub large: VolumeEstimate,
}

/// `Vol(B(p,2δ))/Vol(B(p,δ))`.
pub fn doubling_constant(d: &ModelDomain, provider: FrameProvider, p: &[C64], delta: f64, c: f64, mc: usize, seed: u64) -> Result<DoublingResult> {
    if !(delta > 0.0) {
        return Err(FtlError::Invalid("delta must be positive".into()));
    }
    let fam = BallFamily::new(d, provider, p)?;
    let small = ball_volume(&fam.ball(d, delta, c)?, mc, seed);
    let large = ball_volume(&fam.ball(d, 2.0 * delta, c)?, mc, seed);
    Ok(DoublingResult { ratio: large.value / small.value, small, large })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiMetricResult {
    /// `max γ(p,q)/γ(q,p)` over sampled pairs.
    pub symmetry: f64,
    /// `max γ(p,r)/(γ(p,q)+γ(q,r))` over sampled triples.
    pub triangle: f64,
    pub samples: usize,
    pub non_monotone: usize,
}

/// Sampled quasi-symmetry and quasi-triangle constants among boundary points of `B(p,δ)`.
pub fn quasi_metric_constants(
    d: &ModelDomain,
    provider: FrameProvider,
    p: &[C64],
    delta: f64,
    c: f64,
    samples: usize,
    seed: u64,
) -> Result<QuasiMetricResult> {
    let fam = BallFamily::new(d, provider, p)?;
    let radii = fam.radii(delta, c);
    let n = p.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point> = Vec::new();
    let mut guard = 0;
    while pts.len() < 3 * samples && guard < 100 * samples {
        guard += 1;
        let zt = sample_polydisc(&mut rng, &radii[..n - 1]);
        let y = rng.gen_range(-0.9..0.9) * radii[n - 1];
        if let Some(q) = fam.boundary_point(d, &zt, y) {
            pts.push(q);
        }
    }
    let fams: Vec<BallFamily> = pts.par_iter().map(|q| BallFamily::new(d, provider, q)).collect::<Result<_>>()?;
    let g = |a: usize, b: usize| gamma_in(&fams[a], &pts[b], c, 1.0, 1e-16, 1e-3);
    let triples: Vec<(f64, f64, usize)> = (0..pts.len() / 3)
        .into_par_iter()
        .map(|t| {
            let (a, b, r) = (3 * t, 3 * t + 1, 3 * t + 2);
            let (gab, gba, gbr, gar) = (g(a, b), g(b, a), g(b, r), g(a, r));
            let nm = [&gab, &gba, &gbr, &gar].iter().filter(|x| x.non_monotone).count();
            let sym = if gba.value > 0.0 { gab.value / gba.value } else { 1.0 };
            let tri = gar.value / (gab.value + gbr.value);
            (sym.max(1.0 / sym), tri, nm)
        })
        .collect();
    Ok(QuasiMetricResult {
        symmetry: triples.iter().map(|t| t.0).fold(1.0, f64::max),
        triangle: triples.iter().map(|t| t.1).fold(0.0, f64::max),
        samples: triples.len(),
        non_monotone: triples.iter().map(|t| t.2).sum(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogReport {
    pub engulfing: f64,
    pub doubling: f64,
    pub quasi_triangle: f64,
    pub quasi_symmetry: f64,
    pub samples: usize,
    pub delta_range: (f64, f64),
    pub domain: String,
    pub provenance: Provenance,
    pub diverged: bool,
}

/// Runs engulfing, doubling and quasi-metric sweeps over a `δ` grid and keeps the worst constants.
pub fn homog_report(d: &ModelDomain, provider: FrameProvider, p: &[C64], grid: &[f64], c: f64, samples: usize, seed: u64) -> Result<HomogReport> {
    let mut eng = 1.0f64;
    let mut dbl = 1.0f64;
    let mut tri = 0.0f64;
    let mut sym = 1.0f64;
    let mut diverged = false;
    for (k, &dl) in grid.iter().enumerate() {
        let e = engulfing_constant(d, provider, p, dl, c, samples, 64, seed + k as u64)?;
        eng = eng.max(e.constant);
        diverged |= e.diverged;
        let db = doubling_constant(d, provider, p, dl, c, 4096, seed + k as u64)?;
        dbl = dbl.max(db.ratio);
        let q = quasi_metric_constants(d, provider, p, dl, c, samples.min(16), seed + k as u64)?;
        tri = tri.max(q.triangle);
        sym = sym.max(q.symmetry);
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    Ok(HomogReport {
        engulfing: eng,
        doubling: dbl,
        quasi_triangle: tri,
        quasi_symmetry: sym,
        samples,
        delta_range: (lo, hi),
        domain: d.name.clone(),
        provenance: provider.provenance(),
        diverged: diverged || !eng.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_of_a_point_with_itself_is_zero() {
        let d = ModelDomain::siegel();
        let p = vec![C64::new(0.0, 0.0); 3];
        assert_eq!(gamma(&d, FrameProvider::Canonical, &p, &p, 0.5, 1e-6).unwrap().value, 0.0);
    }
}
