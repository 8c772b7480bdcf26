//! Coincidence histograms over pairs of timestamp streams.
//!
//! Delays are `stop − start` (or `b − a`), binned on half-open intervals
//! `[t_min + k·w, t_min + (k+1)·w)`. All arithmetic is on integer ticks, so
//! chunked and parallel runs reproduce sequential results exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{ns_to_ticks, PhotonStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    /// At most one stop per start on each side of zero delay.
    StartStop,
    /// Every pair in the window.
    Full,
}

impl HistogramMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HistogramMode::StartStop => "start_stop",
            HistogramMode::Full => "full",
        }
    }
}

impl std::str::FromStr for HistogramMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start_stop" | "start-stop" | "startstop" => Ok(HistogramMode::StartStop),
            "full" => Ok(HistogramMode::Full),
            other => Err(Error::Format(format!("unknown histogram mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ns: f64,
    pub t_min_ns: f64,
    pub t_max_ns: f64,
    pub counts: Vec<u64>,
    pub n_starts: u64,
    pub n_stops: u64,
    pub acquisition_duration_s: f64,
    pub mode: HistogramMode,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.t_min_ns + (k as f64 + 0.5) * self.bin_width_ns
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.bin_center(k)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ns > 0.0) || !(self.t_max_ns > self.t_min_ns) {
            return Err(Error::Format("histogram needs bin_width > 0 and t_max > t_min".into()));
        }
        let n = (self.t_max_ns - self.t_min_ns) / self.bin_width_ns;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) || n.round() as usize != self.counts.len() {
            return Err(Error::Format(format!(
                "range spans {n} bins but {} counts are present",
                self.counts.len()
            )));
        }
        Ok(())
    }
}

/// Bin geometry in ticks.
#[derive(Debug, Clone, Copy)]
struct Bins {
    lo: i64,
    hi: i64,
    width: i64,
    n: usize,
}

impl Bins {
    fn new(bin_width_ns: f64, t_min_ns: f64, t_max_ns: f64, resolution_ps: u64) -> Result<Self> {
        if !(t_min_ns < t_max_ns) {
            return Err(Error::param("t_min/t_max", format!("empty range [{t_min_ns}, {t_max_ns})")));
        }
        if !(bin_width_ns > 0.0) {
            return Err(Error::param("bin_width", "must be > 0"));
        }
        let width = ns_to_ticks(bin_width_ns, resolution_ps);
        let lo = ns_to_ticks(t_min_ns, resolution_ps);
        let hi = ns_to_ticks(t_max_ns, resolution_ps);
        if width <= 0 {
            return Err(Error::param("bin_width", "shorter than one tick"));
        }
        if (hi - lo) % width != 0 || hi <= lo {
            return Err(Error::param(
                "t_min/t_max",
                format!("range [{t_min_ns}, {t_max_ns}) ns is not a whole number of {bin_width_ns} ns bins"),
            ));
        }
        Ok(Bins {
            lo,
            hi,
            width,
            n: ((hi - lo) / width) as usize,
        })
    }

    #[inline(always)]
    fn index(&self, delay: i64) -> usize {
        ((delay - self.lo) / self.width) as usize
    }
}

/// How the start stream is split into independent work units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    /// Starts per chunk; `None` processes the whole stream as one chunk.
    pub chunk_size: Option<usize>,
    pub parallel: bool,
}

impl ChunkPlan {
    pub const SEQUENTIAL: ChunkPlan = ChunkPlan {
        chunk_size: None,
        parallel: false,
    };
}

impl Default for ChunkPlan {
    fn default() -> Self {
        ChunkPlan {
            chunk_size: Some(1 << 16),
            parallel: true,
        }
    }
}

fn check_pair(a: &PhotonStream, b: &PhotonStream) -> Result<()> {
    if a.resolution_ps() != b.resolution_ps() {
        return Err(Error::ResolutionMismatch(a.resolution_ps(), b.resolution_ps()));
    }
    Ok(())
}

/// Signed `stop − start` in ticks.
#[inline(always)]
fn delay(stop: u64, start: u64) -> i64 {
    stop.wrapping_sub(start) as i64
}

fn run_chunks<F>(n_starts: usize, n_bins: usize, plan: ChunkPlan, kernel: F) -> Vec<u64>
where
    F: Fn(std::ops::Range<usize>, &mut [u64]) + Sync,
{
    let size = plan.chunk_size.unwrap_or(n_starts).max(1);
    let ranges: Vec<_> = (0..n_starts)
        .step_by(size)
        .map(|s| s..(s + size).min(n_starts))
        .collect();
    let add = |mut x: Vec<u64>, y: Vec<u64>| {
        x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
        x
    };
    if plan.parallel {
        ranges
            .into_par_iter()
            .fold(
                || vec![0u64; n_bins],
                |mut h, r| {
                    kernel(r, &mut h);
                    h
                },
            )
            .reduce(|| vec![0u64; n_bins], add)
    } else {
        let mut h = vec![0u64; n_bins];
        for r in ranges {
            kernel(r, &mut h);
        }
        h
    }
}

/// Single-stop TCSPC histogram. For each start, the earliest stop with delay
/// in `[max(t_min, 0), t_max)` and the latest stop with delay in
/// `[t_min, min(t_max, 0))` each contribute one count.
pub fn start_stop_histogram(
    start: &PhotonStream,
    stop: &PhotonStream,
    bin_width_ns: f64,
    t_min_ns: f64,
    t_max_ns: f64,
) -> Result<Histogram> {
    start_stop_histogram_with(start, stop, bin_width_ns, t_min_ns, t_max_ns, ChunkPlan::default())
}

pub fn start_stop_histogram_with(
    start: &PhotonStream,
    stop: &PhotonStream,
    bin_width_ns: f64,
    t_min_ns: f64,
    t_max_ns: f64,
    plan: ChunkPlan,
) -> Result<Histogram> {
    check_pair(start, stop)?;
    let bins = Bins::new(bin_width_ns, t_min_ns, t_max_ns, start.resolution_ps())?;
    let starts = start.timestamps();
    let stops = stop.timestamps();
    let pos = (bins.lo.max(0), bins.hi);
    let neg = (bins.lo, bins.hi.min(0));

    let counts = run_chunks(starts.len(), bins.n, plan, |range, hist| {
        if stops.is_empty() {
            return;
        }
        let first = starts[range.start];
        // first stop with delay >= pos.0, and first stop with delay >= neg.1
        let mut j = stops.partition_point(|&t| t < shift(first, pos.0));
        let mut k = stops.partition_point(|&t| t < shift(first, neg.1));
        for &s in &starts[range] {
            if pos.0 < pos.1 {
                while j < stops.len() && stops[j] < shift(s, pos.0) {
                    j += 1;
                }
                if j < stops.len() && stops[j] < shift(s, pos.1) {
                    hist[bins.index(delay(stops[j], s))] += 1;
                }
            }
            if neg.0 < neg.1 {
                while k < stops.len() && stops[k] < shift(s, neg.1) {
                    k += 1;
                }
                if k > 0 && stops[k - 1] >= shift(s, neg.0) {
                    hist[bins.index(delay(stops[k - 1], s))] += 1;
                }
            }
        }
    });

    Ok(make_histogram(start, stop, bins, counts, HistogramMode::StartStop))
}

/// `s + offset` clamped to the u64 range.
#[inline(always)]
fn shift(s: u64, offset: i64) -> u64 {
    if offset >= 0 {
        s.saturating_add(offset as u64)
    } else {
        s.saturating_sub(offset.unsigned_abs())
    }
}

/// Counts every pair `(i, j)` with `b_j − a_i` in `[t_min, t_max)`. When both
/// streams hold the same events the `i == j` self-pairs are left out.
pub fn full_correlation(
    a: &PhotonStream,
    b: &PhotonStream,
    bin_width_ns: f64,
    t_min_ns: f64,
    t_max_ns: f64,
) -> Result<Histogram> {
    full_correlation_with(a, b, bin_width_ns, t_min_ns, t_max_ns, ChunkPlan::default())
}

pub fn full_correlation_with(
    a: &PhotonStream,
    b: &PhotonStream,
    bin_width_ns: f64,
    t_min_ns: f64,
    t_max_ns: f64,
    plan: ChunkPlan,
) -> Result<Histogram> {
    check_pair(a, b)?;
    let bins = Bins::new(bin_width_ns, t_min_ns, t_max_ns, a.resolution_ps())?;
    let xs = a.timestamps();
    let ys = b.timestamps();
    let is_self = xs == ys;

    let counts = run_chunks(xs.len(), bins.n, plan, |range, hist| {
        if ys.is_empty() {
            return;
        }
        let mut lo = ys.partition_point(|&t| t < shift(xs[range.start], bins.lo));
        for i in range {
            let x = xs[i];
            let from = shift(x, bins.lo);
            while lo < ys.len() && ys[lo] < from {
                lo += 1;
            }
            let to = shift(x, bins.hi);
            let mut j = lo;
            while j < ys.len() && ys[j] < to {
                if !(is_self && i == j) {
                    hist[bins.index(delay(ys[j], x))] += 1;
                }
                j += 1;
            }
        }
    });

    Ok(make_histogram(a, b, bins, counts, HistogramMode::Full))
}

fn make_histogram(a: &PhotonStream, b: &PhotonStream, bins: Bins, counts: Vec<u64>, mode: HistogramMode) -> Histogram {
    let tick_ns = a.resolution_ps() as f64 / 1e3;
    Histogram {
        bin_width_ns: bins.width as f64 * tick_ns,
        t_min_ns: bins.lo as f64 * tick_ns,
        t_max_ns: bins.hi as f64 * tick_ns,
        counts,
        n_starts: a.len() as u64,
        n_stops: b.len() as u64,
        acquisition_duration_s: a.duration_s().max(b.duration_s()),
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Point {
    pub t_ns: f64,
    pub g2: f64,
    pub stderr: f64,
}

/// Normalises a full correlation by the accidental-coincidence level
/// `n_a·n_b·w/T`, with Poisson bin errors.
pub fn normalize_g2(h: &Histogram) -> Result<Vec<G2Point>> {
    if h.mode != HistogramMode::Full {
        return Err(Error::param(
            "mode",
            "start-stop histograms are not g² estimators beyond short delays; use a full correlation",
        ));
    }
    if h.n_starts == 0 || h.n_stops == 0 || !(h.acquisition_duration_s > 0.0) {
        return Err(Error::InsufficientData("normalisation needs events in both arms and a duration".into()));
    }
    let scale = h.acquisition_duration_s / (h.n_starts as f64 * h.n_stops as f64 * h.bin_width_ns * 1e-9);
    Ok(h.counts
        .iter()
        .enumerate()
        .map(|(k, &c)| G2Point {
            t_ns: h.bin_center(k),
            g2: c as f64 * scale,
            stderr: (c as f64).sqrt() * scale,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::poisson_stream;
    use proptest::prelude::*;

    fn ns(ts: &[u64]) -> PhotonStream {
        PhotonStream::new(1000, 1_000_000, ts.to_vec()).unwrap()
    }

    fn brute_full(a: &[u64], b: &[u64], w: i64, lo: i64, hi: i64, same: bool) -> Vec<u64> {
        let mut h = vec![0u64; ((hi - lo) / w) as usize];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                if same && i == j {
                    continue;
                }
                let d = y as i64 - x as i64;
                if d >= lo && d < hi {
                    h[((d - lo) / w) as usize] += 1;
                }
            }
        }
        h
    }

    fn brute_start_stop(a: &[u64], b: &[u64], w: i64, lo: i64, hi: i64) -> Vec<u64> {
        let mut h = vec![0u64; ((hi - lo) / w) as usize];
        for &x in a {
            let delays = b.iter().map(|&y| y as i64 - x as i64);
            let pos = delays.clone().filter(|&d| d >= lo.max(0) && d < hi).min();
            let neg = delays.filter(|&d| d >= lo && d < hi.min(0)).max();
            for d in pos.into_iter().chain(neg) {
                h[((d - lo) / w) as usize] += 1;
            }
        }
        h
    }

    #[test]
    fn start_stop_hand_trace() {
        let h = start_stop_histogram(&ns(&[0, 100]), &ns(&[10, 130]), 10.0, 0.0, 50.0).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0, 1, 0]);
        assert_eq!((h.n_starts, h.n_stops), (2, 2));
        let empty = start_stop_histogram(&ns(&[0, 100]), &ns(&[]), 10.0, -50.0, 50.0).unwrap();
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn start_stop_two_sided_takes_nearest_on_each_side() {
        let h = start_stop_histogram(&ns(&[100]), &ns(&[60, 80, 120, 140]), 10.0, -50.0, 50.0).unwrap();
        // latest before: −20, earliest after: +20
        assert_eq!(h.counts, vec![0, 0, 0, 1, 0, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn full_hand_trace() {
        let h = full_correlation(&ns(&[0]), &ns(&[5, 15]), 10.0, 0.0, 20.0).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        let edge = full_correlation(&ns(&[0]), &ns(&[20]), 10.0, 0.0, 20.0).unwrap();
        assert_eq!(edge.total(), 0);
    }

    #[test]
    fn self_correlation_is_symmetric_without_zero_lag_pairs() {
        // even delays never land on the odd-tick bin edges
        let base = poisson_stream(1e7, 1e-4, 1, 3).unwrap();
        let even: Vec<u64> = base.timestamps().iter().map(|t| 2 * t).collect();
        let s = PhotonStream::new(1, 2 * base.duration_ticks(), even).unwrap();
        let h = full_correlation(&s, &s, 0.01, -1.005, 1.005).unwrap();
        let n = h.n_bins();
        assert!(h.total() > 0);
        for k in 0..n {
            assert_eq!(h.counts[k], h.counts[n - 1 - k]);
        }
        let t = [0u64, 5];
        let tiny = full_correlation(&ns(&t), &ns(&t), 1.0, -10.0, 10.0).unwrap();
        assert_eq!(tiny.total(), 2);
    }

    #[test]
    fn rejects_bad_geometry_and_mixed_resolution() {
        let a = ns(&[0]);
        assert!(full_correlation(&a, &a, 0.3, 0.0, 1.0).is_err());
        assert!(full_correlation(&a, &a, 1.0, 1.0, 1.0).is_err());
        let b = PhotonStream::new(1, 10, vec![]).unwrap();
        assert!(matches!(full_correlation(&a, &b, 1.0, 0.0, 10.0), Err(Error::ResolutionMismatch(..))));
        assert!(start_stop_histogram(&a, &b, 1.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn independent_poisson_full_correlation_is_flat() {
        let a = poisson_stream(2e5, 1.0, 1, 1).unwrap();
        let b = poisson_stream(3e5, 1.0, 1, 2).unwrap();
        let h = full_correlation(&a, &b, 10.0, -500.0, 500.0).unwrap();
        let expected = a.len() as f64 * b.len() as f64 * 10e-9 / 1.0;
        let outliers = h
            .counts
            .iter()
            .filter(|&&c| (c as f64 - expected).abs() > 3.0 * expected.sqrt())
            .count();
        assert!(outliers <= 3, "{outliers} of {}", h.n_bins());
        let g2 = normalize_g2(&h).unwrap();
        let mean = g2.iter().map(|p| p.g2).sum::<f64>() / g2.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn normalize_examples() {
        let mut h = full_correlation(&ns(&[0, 10]), &ns(&[5]), 10.0, -20.0, 20.0).unwrap();
        let g = normalize_g2(&h).unwrap();
        assert_eq!(g[0].g2, 0.0);
        let scale = 1e-3 / (2.0 * 1.0 * 10e-9);
        assert!((g[1].g2 - scale).abs() < 1e-9 * scale);
        assert!((g[1].stderr - scale).abs() < 1e-9 * scale);
        h.mode = HistogramMode::StartStop;
        assert!(normalize_g2(&h).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("start-stop".parse::<HistogramMode>().unwrap(), HistogramMode::StartStop);
        assert_eq!(HistogramMode::Full.as_str().parse::<HistogramMode>().unwrap(), HistogramMode::Full);
        assert!("cross".parse::<HistogramMode>().is_err());
    }

    fn sorted(max: u64, len: usize) -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(0..max, 0..len).prop_map(|mut v| {
            v.sort_unstable();
            v
        })
    }

    proptest! {
        #[test]
        fn full_matches_brute_force(a in sorted(5_000, 120), b in sorted(5_000, 120), w in 1i64..40, nlo in -30i64..30, nb in 1i64..20) {
            let (lo, hi) = (nlo * 7, nlo * 7 + nb * w);
            let sa = PhotonStream::new(1, 5_000, a.clone()).unwrap();
            let sb = PhotonStream::new(1, 5_000, b.clone()).unwrap();
            let h = full_correlation_with(&sa, &sb, w as f64 / 1e3, lo as f64 / 1e3, hi as f64 / 1e3, ChunkPlan::SEQUENTIAL).unwrap();
            prop_assert_eq!(h.counts, brute_full(&a, &b, w, lo, hi, a == b));
        }

        #[test]
        fn start_stop_matches_brute_force(a in sorted(5_000, 120), b in sorted(5_000, 120), w in 1i64..40, nlo in -30i64..30, nb in 1i64..20) {
            let (lo, hi) = (nlo * 7, nlo * 7 + nb * w);
            let sa = PhotonStream::new(1, 5_000, a.clone()).unwrap();
            let sb = PhotonStream::new(1, 5_000, b.clone()).unwrap();
            let h = start_stop_histogram_with(&sa, &sb, w as f64 / 1e3, lo as f64 / 1e3, hi as f64 / 1e3, ChunkPlan::SEQUENTIAL).unwrap();
            prop_assert!(h.total() <= 2 * h.n_starts);
            prop_assert_eq!(h.counts, brute_start_stop(&a, &b, w, lo, hi));
        }

        #[test]
        fn chunking_does_not_change_counts(a in sorted(20_000, 300), b in sorted(20_000, 300), size in 1usize..50) {
            let sa = PhotonStream::new(1, 20_000, a).unwrap();
            let sb = PhotonStream::new(1, 20_000, b).unwrap();
            let plan = ChunkPlan { chunk_size: Some(size), parallel: true };
            let f0 = full_correlation_with(&sa, &sb, 0.01, -0.5, 0.5, ChunkPlan::SEQUENTIAL).unwrap();
            let f1 = full_correlation_with(&sa, &sb, 0.01, -0.5, 0.5, plan).unwrap();
            prop_assert_eq!(f0, f1);
            let s0 = start_stop_histogram_with(&sa, &sb, 0.01, -0.5, 0.5, ChunkPlan::SEQUENTIAL).unwrap();
            let s1 = start_stop_histogram_with(&sa, &sb, 0.01, -0.5, 0.5, plan).unwrap();
            prop_assert_eq!(s0, s1);
        }

        #[test]
        fn common_shift_leaves_histograms_unchanged(a in sorted(20_000, 200), b in sorted(20_000, 200), offset in 0u64..1_000_000) {
            let sa = PhotonStream::new(1, 20_000, a).unwrap();
            let sb = PhotonStream::new(1, 20_000, b).unwrap();
            let (ta, tb) = (sa.shifted(offset).unwrap(), sb.shifted(offset).unwrap());
            let f = |x: &PhotonStream, y: &PhotonStream| full_correlation(x, y, 0.01, -0.3, 0.3).unwrap().counts;
            let s = |x: &PhotonStream, y: &PhotonStream| start_stop_histogram(x, y, 0.01, -0.3, 0.3).unwrap().counts;
            prop_assert_eq!(f(&sa, &sb), f(&ta, &tb));
            prop_assert_eq!(s(&sa, &sb), s(&ta, &tb));
        }
    }
}
