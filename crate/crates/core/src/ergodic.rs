//! Diophantine excluded sets and ergodicity constants of a rotational-transform
//! profile.
//!
//! Mode `(m, n)` pairs the toroidal frequency `m` with the poloidal frequency
//! `n`; the field-line derivative acts on `e^{i(m phi + n theta)}` through the
//! factor `m + iota n`. All mode sets are truncated to `|m|, |n| <= K` and
//! `|(m, n)|` is the Euclidean length.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldKind, FieldModel, IotaProfile};

/// Number of samples for the monotonicity check and the per-surface constants.
pub const PROFILE_SAMPLES: usize = 1001;
pub const CONSTANT_SAMPLES: usize = 101;
const RESONANCE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcludedInterval {
    pub psi_lo: f64,
    pub psi_hi: f64,
    pub m: i64,
    pub n: i64,
}

impl ExcludedInterval {
    pub fn len(&self) -> f64 {
        self.psi_hi - self.psi_lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.psi_hi > self.psi_lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineReport {
    pub gamma: f64,
    pub m_level: f64,
    pub cutoff: usize,
    pub psi_range: (f64, f64),
    pub intervals: Vec<ExcludedInterval>,
    /// Measure of the union of `intervals`.
    pub excluded_measure: f64,
    pub total_length: f64,
    /// `(psi, M(psi))` at uniformly spaced surfaces.
    pub constants: Vec<(f64, f64)>,
    merged: Vec<(f64, f64)>,
}

impl DiophantineReport {
    /// Disjoint sorted union of the intervals.
    pub fn union(&self) -> &[(f64, f64)] {
        &self.merged
    }

    /// Membership of `psi` in the open union.
    pub fn contains(&self, psi: f64) -> bool {
        let k = self.merged.partition_point(|&(lo, _)| lo < psi);
        k > 0 && psi < self.merged[k - 1].1
    }

    pub fn write_intervals_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "psi_lo,psi_hi,m,n")?;
        for iv in &self.intervals {
            writeln!(w, "{:.15e},{:.15e},{},{}", iv.psi_lo, iv.psi_hi, iv.m, iv.n)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_constants_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "psi,constant")?;
        for (psi, c) in &self.constants {
            writeln!(w, "{psi:.12e},{c:.12e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mode_norm(m: i64, n: i64) -> f64 {
    ((m * m + n * n) as f64).sqrt()
}

/// Half-width `1 / (M |(m, n)|^gamma)` of the resonance band in `m + iota n`.
fn band(m: i64, n: i64, gamma: f64, m_level: f64) -> f64 {
    1.0 / (m_level * mode_norm(m, n).powf(gamma))
}

fn iota_of(field: &FieldModel) -> Result<&IotaProfile> {
    match field.kind() {
        FieldKind::TorusIntegrable | FieldKind::TorusPerturbed => field
            .iota_profile()
            .ok_or_else(|| Error::WrongKind("field has no rotational transform".into())),
        k => Err(Error::WrongKind(format!(
            "rotational transform is undefined for {}",
            k.name()
        ))),
    }
}

fn check_params(gamma: f64, m_level: f64, cutoff: usize) -> Result<()> {
    if !(gamma > 2.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must exceed 2")));
    }
    if !(m_level > 0.0 && m_level.is_finite()) {
        return Err(Error::InvalidParameter(format!("M = {m_level} must be positive")));
    }
    if cutoff == 0 {
        return Err(Error::InvalidParameter("mode cutoff must be at least 1".into()));
    }
    Ok(())
}

/// Sign of `iota'` (+1 or -1) if `iota` is strictly monotone on the samples.
fn monotone_direction(iota: &IotaProfile, range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = range;
    let values: Vec<f64> = (0..PROFILE_SAMPLES)
        .map(|k| iota.value(lo + (hi - lo) * k as f64 / (PROFILE_SAMPLES - 1) as f64))
        .collect();
    let first = values[1] - values[0];
    if first == 0.0 {
        return Err(Error::NonMonotoneIota);
    }
    let s = first.signum();
    if values.windows(2).all(|w| (w[1] - w[0]) * s > 0.0) {
        Ok(s)
    } else {
        Err(Error::NonMonotoneIota)
    }
}

/// Solves `iota(psi) = target` by bisection on a monotone profile, clamping to the range.
fn invert(iota: &IotaProfile, range: (f64, f64), dir: f64, target: f64) -> f64 {
    let (mut a, mut b) = range;
    if (iota.value(a) - target) * dir >= 0.0 {
        return a;
    }
    if (iota.value(b) - target) * dir <= 0.0 {
        return b;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (iota.value(mid) - target) * dir < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Excluded intervals of the field's rotational transform.
pub fn excluded_intervals(
    field: &FieldModel,
    gamma: f64,
    m_level: f64,
    cutoff: usize,
) -> Result<DiophantineReport> {
    let iota = iota_of(field)?;
    excluded_intervals_for(iota, field.psi_range(), gamma, m_level, cutoff)
}

/// Excluded intervals `{psi : |m + iota(psi) n| < 1 / (M |(m, n)|^gamma)}` for all
/// `0 < |(m, n)|` with `|m|, |n| <= K`. The pairs `(m, n)` and `(-m, -n)` give the
/// same set, so only `n > 0` (and `m > 0` for `n = 0`) are listed.
pub fn excluded_intervals_for(
    iota: &IotaProfile,
    psi_range: (f64, f64),
    gamma: f64,
    m_level: f64,
    cutoff: usize,
) -> Result<DiophantineReport> {
    check_params(gamma, m_level, cutoff)?;
    let (lo, hi) = psi_range;
    if !(hi > lo) {
        return Err(Error::InvalidParameter("empty psi range".into()));
    }
    let dir = monotone_direction(iota, psi_range)?;
    let k = cutoff as i64;
    let (i_lo, i_hi) = {
        let (a, b) = (iota.value(lo), iota.value(hi));
        (a.min(b), a.max(b))
    };

    let mut intervals: Vec<ExcludedInterval> = (1..=k)
        .filter(|&m| band(m, 0, gamma, m_level) > m as f64)
        .map(|m| ExcludedInterval {
            psi_lo: lo,
            psi_hi: hi,
            m,
            n: 0,
        })
        .collect();
    let banded: Vec<ExcludedInterval> = (1..=k)
        .into_par_iter()
        .flat_map_iter(|n| {
            (-k..=k).filter_map(move |m| {
                let w = band(m, n, gamma, m_level) / n as f64;
                let centre = -(m as f64) / n as f64;
                let (a, b) = (centre - w, centre + w);
                if b <= i_lo || a >= i_hi {
                    return None;
                }
                let pa = invert(iota, psi_range, dir, a);
                let pb = invert(iota, psi_range, dir, b);
                let iv = ExcludedInterval {
                    psi_lo: pa.min(pb),
                    psi_hi: pa.max(pb),
                    m,
                    n,
                };
                (!iv.is_empty()).then_some(iv)
            })
        })
        .collect();
    intervals.extend(banded);

    let merged = merge(&intervals);
    let excluded_measure = merged.iter().map(|(a, b)| b - a).sum();
    let total_length = intervals.iter().map(ExcludedInterval::len).sum();
    let constants = (0..CONSTANT_SAMPLES)
        .into_par_iter()
        .map(|s| {
            let psi = lo + (hi - lo) * s as f64 / (CONSTANT_SAMPLES - 1) as f64;
            (psi, constant_at(iota.value(psi), gamma, cutoff))
        })
        .collect();
    Ok(DiophantineReport {
        gamma,
        m_level,
        cutoff,
        psi_range,
        intervals,
        excluded_measure,
        total_length,
        constants,
        merged,
    })
}

fn merge(intervals: &[ExcludedInterval]) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = intervals.iter().map(|iv| (iv.psi_lo, iv.psi_hi)).collect();
    spans.sort_by(|a, b| a.partial_cmp(b).expect("finite endpoints"));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Direct evaluation of the truncated inequality: is some `|m + iota n|` below its band?
pub fn violates_diophantine(iota_value: f64, gamma: f64, m_level: f64, cutoff: usize) -> bool {
    let k = cutoff as i64;
    // every band is at most 1/M, so only m within 1/M of -iota n can qualify
    let reach = 1.0 / m_level;
    (0..=k).any(|n| {
        let centre = -iota_value * n as f64;
        let lo = ((centre - reach).floor() as i64).max(-k);
        let hi = ((centre + reach).ceil() as i64).min(k);
        (lo..=hi).any(|m| {
            (n > 0 || m > 0) && (m as f64 + iota_value * n as f64).abs() < band(m, n, gamma, m_level)
        })
    })
}

fn constant_at(iota_value: f64, gamma: f64, cutoff: usize) -> f64 {
    let k = cutoff as i64;
    let mut best: f64 = 0.0;
    for n in 0..=k {
        for m in -k..=k {
            if n == 0 && m <= 0 {
                continue;
            }
            let d = (m as f64 + iota_value * n as f64).abs();
            if d < RESONANCE_FLOOR {
                return f64::INFINITY;
            }
            best = best.max(mode_norm(m, n).powf(-gamma) / (TAU * d));
        }
    }
    best
}

/// `M(psi) = max |(m, n)|^{-gamma} / (2 pi |m + iota(psi) n|)` over truncated nonzero
/// modes; `+inf` on (numerically) resonant surfaces. Planar kinds reduce to the
/// single-angle symbol `2 pi i m` and give `1 / (2 pi)`.
pub fn ergodicity_constant(field: &FieldModel, psi: f64, gamma: f64, cutoff: usize) -> Result<f64> {
    if cutoff == 0 {
        return Err(Error::InvalidParameter("mode cutoff must be at least 1".into()));
    }
    match field.kind() {
        FieldKind::Annulus2D | FieldKind::Channel2D => Ok(1.0 / TAU),
        FieldKind::TorusPerturbed => Err(Error::WrongKind(
            "ergodicity constants need an integrable field".into(),
        )),
        FieldKind::TorusIntegrable => {
            let iota = field.rotational_transform(psi)?;
            Ok(constant_at(iota, gamma, cutoff))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityCheck {
    pub gamma: f64,
    pub c: f64,
    /// `(M, mu(N(gamma, M)), M^c mu)` per level.
    pub rows: Vec<(f64, f64, f64)>,
    pub decreasing: bool,
}

impl ErgodicityCheck {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "M,measure,scaled")?;
        for (m, mu, s) in &self.rows {
            writeln!(w, "{m:.6e},{mu:.12e},{s:.12e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tabulates `M^c mu(N(gamma, M))`, where the non-ergodic set at level `M` is the
/// excluded set at Diophantine level `2 pi M` (the surfaces whose ergodicity
/// constant exceeds `M`).
pub fn check_ergodicity_condition(
    field: &FieldModel,
    gamma: f64,
    c: f64,
    m_list: &[f64],
    cutoff: usize,
) -> Result<ErgodicityCheck> {
    let iota = iota_of(field)?;
    check_ergodicity_condition_for(iota, field.psi_range(), gamma, c, m_list, cutoff)
}

pub fn check_ergodicity_condition_for(
    iota: &IotaProfile,
    psi_range: (f64, f64),
    gamma: f64,
    c: f64,
    m_list: &[f64],
    cutoff: usize,
) -> Result<ErgodicityCheck> {
    if m_list.is_empty() || m_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("M list must be strictly increasing".into()));
    }
    let rows = m_list
        .iter()
        .map(|&m| {
            let rep = excluded_intervals_for(iota, psi_range, gamma, TAU * m, cutoff)?;
            Ok((m, rep.excluded_measure, m.powf(c) * rep.excluded_measure))
        })
        .collect::<Result<Vec<_>>>()?;
    let decreasing = rows.windows(2).all(|w| w[1].2 < w[0].2);
    Ok(ErgodicityCheck {
        gamma,
        c,
        rows,
        decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 1.618_033_988_749_895;

    fn unit() -> (IotaProfile, (f64, f64)) {
        (IotaProfile::identity(), (0.0, 1.0))
    }

    #[test]
    fn single_resonance_width() {
        let (iota, range) = unit();
        let rep = excluded_intervals_for(&iota, range, 3.0, 10.0, 2).unwrap();
        let iv = rep.intervals.iter().find(|iv| iv.m == -1 && iv.n == 2).unwrap();
        let half = 1.0 / (10.0 * 2.0 * 5f64.powf(1.5));
        assert!((0.5 * (iv.psi_lo + iv.psi_hi) - 0.5).abs() < 1e-14);
        assert!((0.5 * iv.len() - half).abs() < 1e-14);
        assert!((half - 0.004472).abs() < 1e-6);
    }

    #[test]
    fn measure_shrinks_with_level() {
        let (iota, range) = unit();
        let mut prev = f64::INFINITY;
        for m in [10.0, 100.0, 1000.0] {
            let rep = excluded_intervals_for(&iota, range, 3.0, m, 20).unwrap();
            assert!(rep.excluded_measure < prev);
            assert!(rep.excluded_measure <= rep.total_length + 1e-15);
            prev = rep.excluded_measure;
        }
    }

    #[test]
    fn union_matches_direct_test() {
        let (iota, range) = unit();
        let rep = excluded_intervals_for(&iota, range, 3.0, 10.0, 12).unwrap();
        for s in 0..4000 {
            let psi = (s as f64 + 0.37) / 4000.0;
            assert_eq!(rep.contains(psi), violates_diophantine(psi, 3.0, 10.0, 12), "{psi}");
        }
    }

    #[test]
    fn constant_iota_is_rejected() {
        let r = excluded_intervals_for(&IotaProfile::constant(0.3), (0.0, 1.0), 3.0, 10.0, 5);
        assert_eq!(r, Err(Error::NonMonotoneIota));
    }

    #[test]
    fn rational_surface_gives_sentinel() {
        assert!(constant_at(0.5, 3.0, 10).is_infinite());
        assert!(constant_at(2.0 / 3.0, 3.0, 10).is_infinite());
    }

    #[test]
    fn golden_constant_matches_exhaustive_scan() {
        let k = 100i64;
        let mut best: f64 = 0.0;
        for m in -k..=k {
            for n in -k..=k {
                if m == 0 && n == 0 {
                    continue;
                }
                let norm = ((m * m + n * n) as f64).sqrt();
                best = best.max(norm.powf(-3.0) / (TAU * (m as f64 + GOLDEN * n as f64).abs()));
            }
        }
        let c = constant_at(GOLDEN, 3.0, 100);
        assert!(c.is_finite());
        assert_eq!(c, best);
    }

    #[test]
    fn constant_threshold_matches_diophantine_level() {
        let m = 3.0;
        for s in 0..300 {
            let iota = 0.5 + (s as f64 + 0.5) / 300.0;
            let c = constant_at(iota, 3.0, 15);
            assert_eq!(c <= m, !violates_diophantine(iota, 3.0, TAU * m, 15), "{iota}");
        }
    }

    #[test]
    fn scaled_measure_decreases_for_small_exponent() {
        let (iota, range) = unit();
        let chk = check_ergodicity_condition_for(&iota, range, 3.0, 0.5, &[10.0, 100.0, 1000.0], 50).unwrap();
        assert!(chk.decreasing);
    }
}
