//! Parsers for command-line values: `δ` grids, points, directions and domains.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ftl_core::fit::log_grid;
use ftl_core::homog::FrameProvider;
use ftl_core::{ModelDomain, Point, C64};

/// `v` or `min:max:count` (log-spaced, returned in decreasing order).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [v] => vec![parse_positive(v)?],
        [lo, hi, count] => {
            let lo = parse_positive(lo)?;
            let hi = parse_positive(hi)?;
            let count: usize = count.trim().parse().with_context(|| format!("bad grid count in {s:?}"))?;
            if count == 0 {
                bail!("grid {s:?} is empty");
            }
            if lo > hi {
                bail!("grid {s:?}: min exceeds max");
            }
            log_grid(hi, lo, count)
        }
        _ => bail!("grid {s:?} must be a value or min:max:count"),
    };
    Ok(grid)
}

fn parse_positive(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("not a number: {s:?}"))?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("expected a positive number, got {s:?}");
    }
    Ok(v)
}

fn parse_complex(s: &str) -> Result<C64> {
    let t = s.trim().replace(' ', "");
    t.parse::<C64>().map_err(|_| anyhow!("not a complex number: {s:?}"))
}

/// Comma-separated complex coordinates in input order.
pub fn parse_point(s: &str) -> Result<Vec<C64>> {
    s.split(',').map(parse_complex).collect()
}

/// Reorders input coordinates into the internal layout (normal variable last).
pub fn to_internal(d: &ModelDomain, input: &[C64]) -> Result<Point> {
    if input.len() != d.n {
        bail!("point has {} coordinates, domain {} has n = {}", input.len(), d.name, d.n);
    }
    let mut p = vec![C64::new(0.0, 0.0); d.n];
    for (k, v) in input.iter().enumerate() {
        p[d.internal_slot(k + 1)?] = *v;
    }
    Ok(p)
}

/// Inverse of [`to_internal`].
pub fn to_input(d: &ModelDomain, p: &[C64]) -> Point {
    (0..d.n).map(|k| p[d.input_slots[k]]).collect()
}

/// Boundary point from an input point: the real part of the normal coordinate is recomputed.
pub fn boundary_from_input(d: &ModelDomain, input: Option<&str>) -> Result<Point> {
    let p = match input {
        Some(s) => to_internal(d, &parse_point(s)?)?,
        None => vec![C64::new(0.0, 0.0); d.n],
    };
    Ok(d.boundary_point(&p[..d.n - 1], p[d.n - 1].im))
}

/// `e2+e3`, `e2-0.5*e3`, `e2`: a unit combination of tangent slots named by input variables.
pub fn parse_direction(d: &ModelDomain, s: &str) -> Result<Vec<C64>> {
    let mut a = vec![C64::new(0.0, 0.0); d.n - 1];
    let text = s.replace(' ', "");
    if text.is_empty() {
        bail!("empty direction");
    }
    let mut terms: Vec<(f64, &str)> = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 1..=bytes.len() {
        if i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'*') {
            let mut t = &text[start..i];
            let mut sign = 1.0;
            if let Some(rest) = t.strip_prefix('-') {
                sign = -1.0;
                t = rest;
            } else if let Some(rest) = t.strip_prefix('+') {
                t = rest;
            }
            terms.push((sign, t));
            start = i;
        }
    }
    for (sign, t) in terms {
        let (coef, var) = match t.split_once('*') {
            Some((c, v)) => (c.parse::<f64>().with_context(|| format!("bad coefficient in {s:?}"))?, v),
            None => (1.0, t),
        };
        let k: usize = var
            .strip_prefix('e')
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| anyhow!("bad direction term {t:?} in {s:?} (expected e<k>)"))?;
        let slot = d.internal_slot(k)?;
        if slot == d.n - 1 {
            bail!("e{k} is the normal direction of {}", d.name);
        }
        a[slot] += C64::new(sign * coef, 0.0);
    }
    let nrm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if nrm == 0.0 {
        bail!("direction {s:?} is zero");
    }
    Ok(a.into_iter().map(|x| x / nrm).collect())
}

/// A catalog name or a path to a JSON domain file.
pub fn load_domain(arg: &str) -> Result<ModelDomain> {
    if let Some(d) = ModelDomain::by_name(arg) {
        return Ok(d);
    }
    let path = Path::new(arg);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    if !path.exists() {
        if let Some(d) = ModelDomain::by_name(stem) {
            return Ok(d);
        }
        bail!("no catalog domain or file named {arg:?}");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    ModelDomain::from_json(&text).with_context(|| format!("in domain file {arg}"))
}

pub fn parse_frame(s: &str) -> Result<FrameProvider> {
    match s {
        "canonical" => Ok(FrameProvider::Canonical),
        "levi" | "levi-eigen" => Ok(FrameProvider::LeviEigen),
        _ => bail!("unknown frame {s:?} (canonical or levi)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_decreasing_and_inclusive() {
        let g = parse_grid("1e-6:1e-2:5").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-2).abs() < 1e-15 && (g[4] - 1e-6).abs() < 1e-18);
        assert!(parse_grid("1e-2:1e-6:5").is_err());
        assert!(parse_grid("0").is_err());
    }

    #[test]
    fn herbort_directions_use_input_variables() {
        let d = ModelDomain::herbort();
        let a = parse_direction(&d, "e2+e3").unwrap();
        assert!((a[0].re - a[1].re).abs() < 1e-15 && (a[0].re - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(parse_direction(&d, "e1").is_err());
        let b = parse_direction(&d, "e2-0.5*e3").unwrap();
        assert!(b[1].re < 0.0);
    }

    #[test]
    fn points_round_trip_through_the_internal_layout() {
        let d = ModelDomain::herbort();
        let p = parse_point("1+2i,0.5,-0.25i").unwrap();
        let q = to_internal(&d, &p).unwrap();
        assert_eq!(q[2], p[0]);
        assert_eq!(to_input(&d, &q), p);
    }
}
