//! Objective error metrics and the Mann-Whitney rank test used for
//! paired-preference grading.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::track::CoefficientTrack;

/// Largest `n_a * n_b` for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 400;

/// Label printed with every preference result.
pub const SCORE_CODING: &str = "score coding A=1, no difference=0.5, B=0";

pub fn mae(predicted: &CoefficientTrack, truth: &CoefficientTrack) -> Result<f64> {
    check_shapes(predicted, truth)?;
    let n = predicted.n_frames() * predicted.n_channels();
    if n == 0 {
        return Err(Error::invalid("empty tracks"));
    }
    let total: f64 = predicted
        .frames
        .iter()
        .zip(&truth.frames)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .sum();
    Ok(total / n as f64)
}

fn check_shapes(predicted: &CoefficientTrack, truth: &CoefficientTrack) -> Result<()> {
    if predicted.n_channels() != truth.n_channels() {
        return Err(Error::DimensionMismatch {
            expected: truth.n_channels(),
            actual: predicted.n_channels(),
        });
    }
    if predicted.n_frames() != truth.n_frames() {
        return Err(Error::DimensionMismatch {
            expected: truth.n_frames(),
            actual: predicted.n_frames(),
        });
    }
    Ok(())
}

/// MAE restricted to each named group of channels. Groups must be disjoint.
pub fn grouped_mae(
    predicted: &CoefficientTrack,
    truth: &CoefficientTrack,
    groups: &[(String, Vec<String>)],
) -> Result<Vec<(String, f64)>> {
    check_shapes(predicted, truth)?;
    if truth.is_empty() {
        return Err(Error::invalid("empty tracks"));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(groups.len());
    for (group, channels) in groups {
        if channels.is_empty() {
            return Err(Error::invalid(format!("group {group:?} has no channels")));
        }
        let idx = channels
            .iter()
            .map(|name| {
                if !seen.insert(name.as_str()) {
                    return Err(Error::invalid(format!("channel {name:?} is in two groups")));
                }
                truth
                    .channel_index(name)
                    .ok_or_else(|| Error::invalid(format!("unknown channel {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = predicted
            .frames
            .iter()
            .zip(&truth.frames)
            .flat_map(|(p, t)| idx.iter().map(move |&c| (p[c] - t[c]).abs()))
            .sum();
        out.push((group.clone(), total / (idx.len() * truth.n_frames()) as f64));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal_approx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// `U_a / (n_a * n_b)`.
    pub u_normalized: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: TestMethod,
}

/// Mid-ranks (1-based) of the pooled sample, and the tie group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// `U_a` counts pairs with `a > b`, ties as one half.
pub fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    if x > y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

/// `U / (n_a * n_b)`, snapped to a multiple of 2^-52 so that swapping the
/// groups gives exactly `1 - u` in floating point.
pub fn normalize_u(u: f64, n_a: usize, n_b: usize) -> f64 {
    let m = (n_a * n_b) as f64;
    let grid = |x: f64| (x / m * GRID).round() / GRID;
    if 2.0 * u <= m {
        grid(u)
    } else {
        1.0 - grid(m - u)
    }
}

const GRID: f64 = (1u64 << 52) as f64;

/// Two-sided Mann-Whitney test. Exact when `n_a * n_b <= EXACT_LIMIT`,
/// otherwise the normal approximation with tie-corrected variance and a
/// continuity correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both groups must be non-empty"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let (na, nb) = (a.len(), b.len());
    let u = u_statistic(a, b);
    let u_normalized = normalize_u(u, na, nb);
    let (p_value, method) = if na * nb <= EXACT_LIMIT {
        (exact_p(a, b), TestMethod::Exact)
    } else {
        (normal_p(a, b, u), TestMethod::NormalApprox)
    };
    Ok(TestResult {
        u_normalized,
        p_value,
        method,
    })
}

/// Exact permutation p-value: the fraction of the `C(N, n_a)` ways to assign
/// the pooled mid-ranks to group A whose U lies at least as far from its mean
/// as the observed one. Computed with a subset-sum recurrence over doubled
/// mid-ranks, which are integers.
fn exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r) as usize).collect();
    let na = a.len();
    let observed: usize = doubled[..na].iter().sum();
    let counts = rank_sum_counts(&doubled, na);
    // The doubled rank sum has mean na * (N + 1).
    let dist = |s: usize| s.abs_diff(na * (pooled.len() + 1));
    let d_obs = dist(observed);
    let total: u128 = counts.iter().sum();
    let extreme: u128 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| dist(s) >= d_obs)
        .map(|(_, &c)| c)
        .sum();
    extreme as f64 / total as f64
}

/// `counts[s]` = number of `k`-subsets of `values` summing to `s`.
fn rank_sum_counts(values: &[usize], k: usize) -> Vec<u128> {
    let max_sum: usize = values.iter().sum();
    let mut table = vec![vec![0u128; max_sum + 1]; k + 1];
    table[0][0] = 1;
    for (i, &v) in values.iter().enumerate() {
        for j in (1..=k.min(i + 1)).rev() {
            let (lo, hi) = table.split_at_mut(j);
            for s in (v..=max_sum).rev() {
                hi[0][s] += lo[j - 1][s - v];
            }
        }
    }
    table.swap_remove(k)
}

fn normal_p(a: &[f64], b: &[f64], u: f64) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (_, ties) = midranks(&pooled);
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term);
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * std.sf(z)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preference {
    A,
    B,
    NoDifference,
}

impl Preference {
    pub fn as_str(self) -> &'static str {
        match self {
            Preference::A => "A",
            Preference::B => "B",
            Preference::NoDifference => "ND",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(Preference::A),
            "B" => Ok(Preference::B),
            "ND" => Ok(Preference::NoDifference),
            other => Err(Error::format(
                "grades",
                format!("unknown preference {other:?}"),
            )),
        }
    }

    pub fn score(self) -> f64 {
        match self {
            Preference::A => 1.0,
            Preference::NoDifference => 0.5,
            Preference::B => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeRecord {
    pub grader_id: String,
    pub utterance_id: String,
    pub preference: Preference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceSummary {
    pub percent_a: f64,
    pub percent_b: f64,
    pub percent_no_difference: f64,
    pub test: TestResult,
}

/// Preference percentages, and a rank test of the coded scores against the
/// mirrored coding (A and B swapped).
pub fn preference_summary(grades: &[GradeRecord]) -> Result<PreferenceSummary> {
    if grades.is_empty() {
        return Err(Error::invalid("no grades"));
    }
    let n = grades.len() as f64;
    let pct =
        |p: Preference| 100.0 * grades.iter().filter(|g| g.preference == p).count() as f64 / n;
    let scores: Vec<f64> = grades.iter().map(|g| g.preference.score()).collect();
    let mirrored: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
    Ok(PreferenceSummary {
        percent_a: pct(Preference::A),
        percent_b: pct(Preference::B),
        percent_no_difference: pct(Preference::NoDifference),
        test: mann_whitney(&scores, &mirrored)?,
    })
}

/// Grades CSV: `grader_id,utterance_id,preference` with preference one of
/// `A`, `B`, `ND`. A header row and `#` comments are allowed.
pub fn parse_grades(text: &str) -> Result<Vec<GradeRecord>> {
    let bad = |m: String| Error::format("grades", m);
    let mut out = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(bad(format!("expected 3 columns: {line:?}")));
        }
        if cells[0] == "grader_id" {
            continue;
        }
        if cells[0].is_empty() || cells[1].is_empty() {
            return Err(bad(format!("empty id: {line:?}")));
        }
        out.push(GradeRecord {
            grader_id: cells[0].to_string(),
            utterance_id: cells[1].to_string(),
            preference: Preference::parse(cells[2])?,
        });
    }
    Ok(out)
}

pub fn read_grades(path: &Path) -> Result<Vec<GradeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grades(&text)
}

/// Presentation-order sidecar: `utterance_id,shown_first` with `A` or `B`.
pub fn parse_order(text: &str) -> Result<BTreeMap<String, Preference>> {
    let bad = |m: String| Error::format("presentation order", m);
    let mut out = BTreeMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(bad(format!("expected 2 columns: {line:?}")));
        }
        if cells[0] == "utterance_id" {
            continue;
        }
        let first = Preference::parse(cells[1])?;
        if first == Preference::NoDifference {
            return Err(bad(format!("shown_first must be A or B: {line:?}")));
        }
        if out.insert(cells[0].to_string(), first).is_some() {
            return Err(bad(format!("duplicate utterance {}", cells[0])));
        }
    }
    Ok(out)
}

/// Number of grades where system A was shown first, after checking every
/// graded utterance has an order entry.
pub fn shown_first_count(
    grades: &[GradeRecord],
    order: &BTreeMap<String, Preference>,
) -> Result<usize> {
    let mut n = 0;
    for g in grades {
        match order.get(&g.utterance_id) {
            Some(Preference::A) => n += 1,
            Some(_) => {}
            None => {
                return Err(Error::format(
                    "presentation order",
                    format!("no entry for utterance {}", g.utterance_id),
                ))
            }
        }
    }
    Ok(n)
}

/// Plain-text preference table.
pub fn preference_report(summary: &PreferenceSummary, n_grades: usize) -> String {
    let mut s = String::new();
    writeln!(s, "preference   percent").unwrap();
    writeln!(s, "A            {:.2}", summary.percent_a).unwrap();
    writeln!(s, "B            {:.2}", summary.percent_b).unwrap();
    writeln!(s, "no_diff      {:.2}", summary.percent_no_difference).unwrap();
    writeln!(s, "grades       {n_grades}").unwrap();
    writeln!(s, "u            {:.6}", summary.test.u_normalized).unwrap();
    writeln!(s, "p            {:.6e}", summary.test.p_value).unwrap();
    writeln!(s, "method       {}", summary.test.method.as_str()).unwrap();
    writeln!(s, "# {SCORE_CODING}").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track(frames: Vec<Vec<f64>>) -> CoefficientTrack {
        let k = frames[0].len();
        CoefficientTrack::new((0..k).map(|c| format!("c{c}")).collect(), 60.0, frames).unwrap()
    }

    fn random_track(rng: &mut ChaCha8Rng, n: usize, k: usize) -> CoefficientTrack {
        track(
            (0..n)
                .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
                .collect(),
        )
    }

    /// Every way to pick which pooled positions belong to group A.
    fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                go(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    /// Brute-force two-sided p over all relabelings of the pooled values.
    fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let centre = (a.len() * b.len()) as f64 / 2.0;
        let d_obs = (u_statistic(a, b) - centre).abs();
        let all = combinations(pooled.len(), a.len());
        let hits = all
            .iter()
            .filter(|pick| {
                let ga: Vec<f64> = pick.iter().map(|&i| pooled[i]).collect();
                let gb: Vec<f64> = (0..pooled.len())
                    .filter(|i| !pick.contains(i))
                    .map(|i| pooled[i])
                    .collect();
                (u_statistic(&ga, &gb) - centre).abs() >= d_obs - 1e-9
            })
            .count();
        hits as f64 / all.len() as f64
    }

    #[test]
    fn mae_basics() {
        let a = track(vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for row in &mut b.frames {
            for v in row.iter_mut() {
                *v += 0.25;
            }
        }
        assert!((mae(&b, &a).unwrap() - 0.25).abs() < 1e-15);
        let short = track(vec![vec![0.1, 0.2]]);
        assert!(mae(&short, &a).is_err());
    }

    #[test]
    fn grouped_mae_matches_direct_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_track(&mut rng, 30, 5);
        let t = random_track(&mut rng, 30, 5);
        let groups = vec![
            (
                "speech".to_string(),
                vec!["c0".to_string(), "c3".to_string()],
            ),
            (
                "other".to_string(),
                vec!["c1".to_string(), "c2".to_string(), "c4".to_string()],
            ),
        ];
        let got = grouped_mae(&p, &t, &groups).unwrap();
        for ((_, v), idx) in got.iter().zip([vec![0, 3], vec![1, 2, 4]]) {
            let mut sum = 0.0;
            for f in 0..30 {
                for &c in &idx {
                    sum += (p.frames[f][c] - t.frames[f][c]).abs();
                }
            }
            assert!((v - sum / (30 * idx.len()) as f64).abs() < 1e-12);
        }
        let all = vec![("all".to_string(), (0..5).map(|c| format!("c{c}")).collect())];
        assert!((grouped_mae(&p, &t, &all).unwrap()[0].1 - mae(&p, &t).unwrap()).abs() < 1e-12);

        let mut q = p.clone();
        for f in 0..30 {
            q.frames[f][0] = t.frames[f][0];
            q.frames[f][3] = t.frames[f][3];
        }
        assert_eq!(grouped_mae(&q, &t, &groups).unwrap()[0].1, 0.0);

        let unknown = vec![("x".to_string(), vec!["nope".to_string()])];
        assert!(grouped_mae(&p, &t, &unknown).is_err());
        let overlap = vec![
            ("x".to_string(), vec!["c0".to_string()]),
            ("y".to_string(), vec!["c0".to_string()]),
        ];
        assert!(grouped_mae(&p, &t, &overlap).is_err());
    }

    #[test]
    fn small_exact_case() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_normalized, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        let same = mann_whitney(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(same.u_normalized, 0.5);
        assert_eq!(same.p_value, 1.0);
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let na = rng.random_range(1..6);
            let nb = rng.random_range(1..6);
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..4) as f64).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..4) as f64).collect();
            let r = mann_whitney(&a, &b).unwrap();
            assert!(
                (r.p_value - brute_force_p(&a, &b)).abs() < 1e-12,
                "{a:?} {b:?}"
            );
        }
    }

    #[test]
    fn normal_approximation_tracks_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let mut pool: Vec<f64> = (0..40).map(|i| i as f64).collect();
            pool.shuffle(&mut rng);
            let shift = rng.random_range(0.0..12.0);
            let a: Vec<f64> = pool[..20].iter().map(|v| v + shift).collect();
            let b = &pool[20..];
            let exact = exact_p(&a, b);
            let approx = normal_p(&a, b, u_statistic(&a, b));
            assert!((exact - approx).abs() < 0.01, "{exact} {approx}");
        }
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
        assert_eq!(
            mann_whitney(&a, &b).unwrap().method,
            TestMethod::NormalApprox
        );
    }

    fn grade(g: &str, u: &str, p: Preference) -> GradeRecord {
        GradeRecord {
            grader_id: g.into(),
            utterance_id: u.into(),
            preference: p,
        }
    }

    #[test]
    fn preference_summaries() {
        let all_a: Vec<_> = (0..10)
            .map(|i| grade("g", &format!("u{i}"), Preference::A))
            .collect();
        let s = preference_summary(&all_a).unwrap();
        assert_eq!(
            (s.percent_a, s.percent_b, s.percent_no_difference),
            (100.0, 0.0, 0.0)
        );
        assert_eq!(s.test.u_normalized, 1.0);

        let balanced: Vec<_> = (0..10)
            .map(|i| {
                grade(
                    "g",
                    &format!("u{i}"),
                    if i % 2 == 0 {
                        Preference::A
                    } else {
                        Preference::B
                    },
                )
            })
            .collect();
        let s = preference_summary(&balanced).unwrap();
        assert_eq!(
            (s.percent_a, s.percent_b, s.percent_no_difference),
            (50.0, 50.0, 0.0)
        );
        assert_eq!(s.test.u_normalized, 0.5);

        // 3 A, 1 B, 1 ND: scores {1,1,1,0,0.5} against {0,0,0,1,0.5}
        let mixed = vec![
            grade("g1", "u1", Preference::A),
            grade("g1", "u2", Preference::A),
            grade("g2", "u1", Preference::A),
            grade("g2", "u2", Preference::B),
            grade("g3", "u1", Preference::NoDifference),
        ];
        let s = preference_summary(&mixed).unwrap();
        assert_eq!(
            (s.percent_a, s.percent_b, s.percent_no_difference),
            (60.0, 20.0, 20.0)
        );
        let a = [1.0, 1.0, 1.0, 0.0, 0.5];
        let b = [0.0, 0.0, 0.0, 1.0, 0.5];
        assert_eq!(s.test.u_normalized, 18.5 / 25.0);
        assert!((s.test.p_value - brute_force_p(&a, &b)).abs() < 1e-12);
        assert!(preference_summary(&[]).is_err());
    }

    #[test]
    fn grade_files() {
        let text = "# graded\ngrader_id,utterance_id,preference\ng1,u1,A\ng2,u1,ND\ng1,u2,B\n";
        let g = parse_grades(text).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[1].preference, Preference::NoDifference);
        assert!(parse_grades("g1,u1,C\n").is_err());
        assert!(parse_grades(",u1,A\n").is_err());

        let order = parse_order("utterance_id,shown_first\nu1,A\nu2,B\n").unwrap();
        assert_eq!(shown_first_count(&g, &order).unwrap(), 2);
        assert!(shown_first_count(&g, &parse_order("u1,A\n").unwrap()).is_err());
        assert!(parse_order("u1,ND\n").is_err());
        assert!(parse_order("u1,A\nu1,B\n").is_err());
    }

    #[test]
    fn report_names_the_coding() {
        let s = preference_summary(&[grade("g", "u", Preference::A)]).unwrap();
        let r = preference_report(&s, 1);
        assert!(r.contains("A            100.00"));
        assert!(r.contains("method       exact"));
        assert!(r.contains(SCORE_CODING));
    }

    proptest! {
        #[test]
        fn u_is_antisymmetric(
            a in proptest::collection::vec(0u8..6, 1..12),
            b in proptest::collection::vec(0u8..6, 1..12),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney(&a, &b).unwrap();
            let ba = mann_whitney(&b, &a).unwrap();
            prop_assert_eq!(ab.u_normalized, 1.0 - ba.u_normalized);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }

        #[test]
        fn u_is_translation_invariant(
            a in proptest::collection::vec(0u8..6, 1..25),
            b in proptest::collection::vec(0u8..6, 1..25),
            shift in -100i32..100,
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s = f64::from(shift);
            let a2: Vec<f64> = a.iter().map(|v| v + s).collect();
            let b2: Vec<f64> = b.iter().map(|v| v + s).collect();
            prop_assert_eq!(
                mann_whitney(&a, &b).unwrap().u_normalized,
                mann_whitney(&a2, &b2).unwrap().u_normalized
            );
        }

        #[test]
        fn mae_is_a_metric(seed in any::<u64>(), n in 1usize..20, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_track(&mut rng, n, k);
            let y = random_track(&mut rng, n, k);
            let z = random_track(&mut rng, n, k);
            let (xy, yx) = (mae(&x, &y).unwrap(), mae(&y, &x).unwrap());
            prop_assert!(xy > 0.0);
            prop_assert_eq!(xy, yx);
            prop_assert_eq!(mae(&x, &x).unwrap(), 0.0);
            prop_assert!(mae(&x, &z).unwrap() <= xy + mae(&y, &z).unwrap() + 1e-12);
        }
    }
}
