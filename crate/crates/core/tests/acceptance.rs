//! Acceptance criteria, one pass/fail line each. Exits non-zero when any fails.

use std::path::Path;
use std::process::{Command, Output};

use gridstat::analysis::{collect_samples, observe, AnalysisOptions};
use gridstat::distributions::{DistSpec, Family};
use gridstat::empirical_stats::{histogram, spearman, Binning};
use gridstat::fitting::{bin_masses, fit_mle, kl_divergence, kl_divergence_masses, FitOptions};
use gridstat::grid_ingest::{parse_branch_csv, parse_matpower_case, serialize_branch_csv, BranchRecord};
use gridstat::per_unit::{rebase_impedance, to_common_base, to_own_base, BaseSpec};
use gridstat::reference_profiles::{builtin_profile, validate, ParameterKind, ValidationThresholds};
use gridstat::rng::UniformStream;
use gridstat::synth_sampler::{generate_transformers, to_branch_records};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const ANALYTIC_TOL: f64 = 1e-12;
const RECOVERY_REL_TOL: f64 = 0.05;
const TWO_BIN_KL: f64 = 0.5108256237659907;
const TWO_BIN_TOL: f64 = 1e-6;
const SELF_KL_TOL: f64 = 1e-12;
const EXP_KL_MAX: f64 = 0.05;
const OWN_DECORRELATION_MAX: f64 = 0.1;
const COMMON_CORRELATION_MAX: f64 = -0.3;
const BAND_115: f64 = 0.8188;
const BAND_TOL: f64 = 0.02;
const PER_UNIT_REL_TOL: f64 = 1e-12;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn profile_transcription() -> Check {
    let p = builtin_profile();
    let mut checked = 0;
    // (kind, class, median, mean, min, max, q10/q90)
    type Row = (ParameterKind, f64, f64, f64, f64, f64, Option<(f64, f64)>);
    let rows: [Row; 9] = [
        (ParameterKind::TransformerReactanceOwnBase, 115.0, 0.1291, 0.1363, 3.92e-4, 1.0162, None),
        (ParameterKind::TransformerReactanceOwnBase, 138.0, 0.1246, 0.1381, 1.00e-4, 1.26, None),
        (ParameterKind::TransformerReactanceOwnBase, 230.0, 0.1260, 0.1392, 2.47e-4, 1.08, None),
        (ParameterKind::TransformerMvaRating, 115.0, 53.0, 71.30, 3.0, 384.0, Some((22.0, 140.0))),
        (ParameterKind::TransformerMvaRating, 138.0, 83.0, 117.24, 3.3, 616.0, Some((39.0, 239.0))),
        (ParameterKind::TransformerMvaRating, 230.0, 203.0, 246.61, 10.0, 1380.0, Some((62.5, 470.0))),
        (ParameterKind::TransformerXr, 115.0, 25.39, 37.83, 0.0577, 5.41e3, Some((16.2, 47.5))),
        (ParameterKind::TransformerXr, 138.0, 29.58, 39.73, 0.2033, 1.92e3, Some((19.1, 54.0))),
        (ParameterKind::TransformerXr, 230.0, 44.37, 65.77, 0.1786, 4.03e3, Some((25.0, 84.0))),
    ];
    for (kind, kv, median, mean, min, max, q) in rows {
        let e = p.lookup(kind, kv).ok_or(format!("{kind} {kv} missing"))?;
        let s = e.summary.ok_or(format!("{kind} {kv} has no summary"))?;
        let want = [Some(median), Some(mean), Some(min), Some(max), q.map(|q| q.0), q.map(|q| q.1)];
        let got = [s.median, s.mean, s.min, s.max, s.q10, s.q90];
        ensure(want == got, format!("{kind} {kv}: {got:?} != {want:?}"))?;
        checked += want.iter().flatten().count();
    }
    for (kv, fraction) in [(115.0, 0.8188), (138.0, 0.8201), (230.0, 0.8733)] {
        let b = p
            .lookup(ParameterKind::TransformerReactanceOwnBase, kv)
            .and_then(|e| e.band)
            .ok_or("band missing")?;
        ensure((b.lo, b.hi, b.fraction) == (0.05, 0.2, fraction), format!("band {kv}: {b:?}"))?;
        checked += 1;
    }
    let gev = [
        (ParameterKind::TransformerMvaRating, 115.0, (41.08, 27.38, 0.3732), 0.1295),
        (ParameterKind::TransformerMvaRating, 138.0, (66.82, 42.31, 0.4166), 0.0990),
        (ParameterKind::TransformerMvaRating, 230.0, (154.79, 105.61, 0.2433), 0.1148),
        (ParameterKind::TransformerXr, 115.0, (22.29, 10.70, 0.2135), 0.0918),
        (ParameterKind::TransformerXr, 138.0, (25.88, 12.34, 0.2167), 0.0949),
        (ParameterKind::TransformerXr, 230.0, (37.79, 19.67, 0.2594), 0.0984),
    ];
    for (kind, kv, (mu, sigma, zeta), dkl) in gev {
        let e = p.lookup(kind, kv).ok_or("entry missing")?;
        ensure(
            e.fitted == Some(DistSpec::Gev { mu, sigma, zeta }),
            format!("{kind} {kv}: fitted {:?}", e.fitted),
        )?;
        ensure(e.reference_d_kl == Some(dkl), format!("{kind} {kv}: d_kl {:?}", e.reference_d_kl))?;
        checked += 4;
    }
    Ok(format!("{checked} values exact"))
}

fn analytic_identities() -> Check {
    let mut worst: f64 = 0.0;
    for zeta in [-0.5, 0.1, 0.3732] {
        let d = DistSpec::gev(41.08, 27.38, zeta).map_err(|e| e.to_string())?;
        worst = worst.max((d.cdf(41.08) - (-1.0f64).exp()).abs());
    }
    for mu in [0.5, 2.0, 0.008686] {
        let d = DistSpec::exponential(mu).map_err(|e| e.to_string())?;
        worst = worst.max((d.pdf(0.0) - 1.0 / mu).abs() * mu);
    }
    for (mu, sigma) in [(0.0, 1.0), (0.1291, 0.04), (-3.0, 7.5)] {
        let d = DistSpec::tls(mu, sigma, 1.0).map_err(|e| e.to_string())?;
        let want = 1.0 / (std::f64::consts::PI * sigma);
        worst = worst.max((d.pdf(mu) - want).abs() / want);
    }
    ensure(worst <= ANALYTIC_TOL, format!("worst deviation {worst:e}"))?;
    Ok(format!("worst deviation {worst:.1e}"))
}

fn mle_recovery() -> Check {
    let p = builtin_profile();
    let opts = FitOptions::default();
    let mut worst: f64 = 0.0;
    for (i, e) in p.entries().iter().filter(|e| e.fitted.is_some()).enumerate() {
        let truth = e.fitted.unwrap();
        let DistSpec::Gev { mu, sigma, zeta } = truth else {
            return Err(format!("{} {} is not GEV", e.kind, e.class_kv));
        };
        let draws = truth.sample(1000 + i as u64, 20_000);
        let fit = fit_mle(Family::Gev, &draws, &opts).map_err(|e| e.to_string())?;
        let DistSpec::Gev { mu: m, sigma: s, zeta: z } = fit.dist else {
            return Err("fit returned another family".into());
        };
        ensure(fit.converged, format!("{} {} did not converge", e.kind, e.class_kv))?;
        let errs = [rel(m, mu), rel(s, sigma), rel(z, zeta)];
        let e_max = errs.iter().cloned().fold(0.0, f64::max);
        ensure(
            e_max <= RECOVERY_REL_TOL,
            format!("{} {}: relative errors {errs:?}", e.kind, e.class_kv),
        )?;
        worst = worst.max(e_max);
    }
    let exp = fit_mle(Family::Exponential, &[1.0, 2.0, 3.0, 4.0], &opts).map_err(|e| e.to_string())?;
    ensure(exp.dist == DistSpec::Exponential { mu: 2.5 }, format!("exponential {:?}", exp.dist))?;
    let norm = fit_mle(Family::Normal, &[0.0, 0.0, 10.0, 10.0], &opts).map_err(|e| e.to_string())?;
    ensure(
        norm.dist == DistSpec::Normal { mu: 5.0, sigma: 5.0 },
        format!("normal {:?}", norm.dist),
    )?;
    Ok(format!("6 GEV sets, worst relative error {:.2}%; closed forms exact", worst * 100.0))
}

fn kl_correctness() -> Check {
    let two = kl_divergence_masses(&[0.5, 0.5], &[0.9, 0.1]).d_kl;
    ensure((two - TWO_BIN_KL).abs() <= TWO_BIN_TOL, format!("two-bin {two}"))?;
    let edges: Vec<f64> = (0..=40).map(|i| -5.0 + 0.5 * i as f64).collect();
    let mut worst_self: f64 = 0.0;
    for d in [
        DistSpec::Normal { mu: 1.0, sigma: 2.0 },
        DistSpec::Tls { mu: 0.0, sigma: 1.0, nu: 3.0 },
        DistSpec::Gev { mu: 0.0, sigma: 1.5, zeta: 0.2 },
        DistSpec::Exponential { mu: 2.0 },
    ] {
        let q = bin_masses(&edges, &d);
        worst_self = worst_self.max(kl_divergence_masses(&q, &q).d_kl);
    }
    ensure(worst_self <= SELF_KL_TOL, format!("self divergence {worst_self:e}"))?;
    let draws = DistSpec::Exponential { mu: 1.0 }.sample(50_000, 50_000);
    let fit = fit_mle(Family::Exponential, &draws, &FitOptions::default()).map_err(|e| e.to_string())?;
    let h = histogram(&draws, Binning::FreedmanDiaconis).map_err(|e| e.to_string())?;
    let d = kl_divergence(&h, &fit.dist).d_kl;
    ensure(d < EXP_KL_MAX, format!("exponential sample divergence {d}"))?;
    Ok(format!("two-bin {two:.6}, self {worst_self:.1e}, sampled exponential {d:.4} nats"))
}

fn decorrelation() -> Check {
    let g = generate_transformers(115.0, 5000, 20_240_101, &builtin_profile(), 100.0).map_err(|e| e.to_string())?;
    let mva: Vec<f64> = g.iter().map(|t| t.mva_rating).collect();
    let own: Vec<f64> = g.iter().map(|t| t.x_pu_own.unwrap()).collect();
    let common: Vec<f64> = g.iter().map(|t| t.x_pu_common).collect();
    let rho_own = spearman(&own, &mva).map_err(|e| e.to_string())?;
    let rho_common = spearman(&common, &mva).map_err(|e| e.to_string())?;
    ensure(rho_own.abs() < OWN_DECORRELATION_MAX, format!("own-base rho {rho_own}"))?;
    ensure(rho_common < COMMON_CORRELATION_MAX, format!("common-base rho {rho_common}"))?;
    Ok(format!("rho(X_own, MVA) = {rho_own:.4}, rho(X_common, MVA) = {rho_common:.4}"))
}

fn round_trip_validation() -> Check {
    let p = builtin_profile();
    let mut records: Vec<BranchRecord> = Vec::new();
    for (i, kv) in [115.0, 138.0, 230.0].into_iter().enumerate() {
        let g = generate_transformers(kv, 5000, 77 + i as u64, &p, 100.0).map_err(|e| e.to_string())?;
        let offset = 100_000 * i as i64;
        records.extend(to_branch_records(&g, 100.0).into_iter().map(|mut r| {
            r.from_bus += offset;
            r.to_bus += offset;
            r
        }));
    }
    let opts = AnalysisOptions::default();
    let samples = collect_samples(&records, &opts).map_err(|e| e.to_string())?;
    let observed = observe(&samples, &p, Binning::FreedmanDiaconis, &opts.fit).map_err(|e| e.to_string())?;
    let report = validate(&observed, &p, &ValidationThresholds::default()).map_err(|e| e.to_string())?;
    let failed: Vec<String> = report
        .failures()
        .map(|f| format!("{} {} {:?}", f.kind, f.class_kv, f.check))
        .collect();
    ensure(report.overall_pass, format!("failed checks: {failed:?}"))?;
    let band = observed
        .iter()
        .find(|o| o.kind == ParameterKind::TransformerReactanceOwnBase && o.class_kv == 115.0)
        .and_then(|o| o.band_fraction)
        .ok_or("115 kV band fraction missing")?;
    ensure((band - BAND_115).abs() <= BAND_TOL, format!("115 kV band fraction {band}"))?;
    let non_skipped = report
        .findings
        .iter()
        .filter(|f| f.status != gridstat::reference_profiles::CheckStatus::Skipped)
        .count();
    Ok(format!("{non_skipped} checks pass, 115 kV band fraction {band:.4}"))
}

fn per_unit_conversion() -> Check {
    let b = |v, s| BaseSpec::new(v, s).unwrap();
    let z1 = rebase_impedance(0.08, b(115.0, 50.0), b(115.0, 100.0)).map_err(|e| e.to_string())?;
    let z2 = rebase_impedance(0.1, b(115.0, 100.0), b(230.0, 100.0)).map_err(|e| e.to_string())?;
    ensure(rel(z1, 0.16) <= PER_UNIT_REL_TOL, format!("rebase {z1}"))?;
    ensure(rel(z2, 0.025) <= PER_UNIT_REL_TOL, format!("rebase {z2}"))?;
    let own = to_own_base(1.0, 100.0, 50.0).map_err(|e| e.to_string())?;
    ensure(rel(own, 0.5) <= PER_UNIT_REL_TOL, format!("own base {own}"))?;
    let same = to_own_base(0.25, 100.0, 100.0).map_err(|e| e.to_string())?;
    ensure(same == 0.25, format!("own base {same}"))?;

    let mut u = UniformStream::new(7, 99);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut draw = |lo: f64, hi: f64| lo * (hi / lo).powf(u.next_open01());
        let (v1, s1, v2, s2) = (draw(1.0, 800.0), draw(1.0, 5000.0), draw(1.0, 800.0), draw(1.0, 5000.0));
        let z = draw(1e-4, 10.0);
        let there = rebase_impedance(z, b(v1, s1), b(v2, s2)).map_err(|e| e.to_string())?;
        let back = rebase_impedance(there, b(v2, s2), b(v1, s1)).map_err(|e| e.to_string())?;
        worst = worst.max(rel(back, z));
        let x = to_common_base(to_own_base(z, s1, s2).map_err(|e| e.to_string())?, s1, s2).map_err(|e| e.to_string())?;
        worst = worst.max(rel(x, z));
    }
    ensure(worst <= PER_UNIT_REL_TOL, format!("round-trip relative error {worst:e}"))?;
    Ok(format!("examples exact, 10000 round trips within {worst:.1e}"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gridstat")
}

fn gridstat(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn parser_conformance() -> Check {
    let text = std::fs::read_to_string(fixture("case3.m")).map_err(|e| e.to_string())?;
    let case = parse_matpower_case(&text).map_err(|e| e.to_string())?;
    let expected = vec![
        BranchRecord {
            id: "1-2-1".into(),
            from_bus: 1,
            to_bus: 2,
            from_kv: 115.0,
            to_kv: 13.8,
            r_pu: 0.002,
            x_pu: 0.05,
            mva_rating: 60.0,
            tap_ratio: 1.0,
            system_mva_base: 100.0,
        },
        BranchRecord {
            id: "1-3-1".into(),
            from_bus: 1,
            to_bus: 3,
            from_kv: 115.0,
            to_kv: 115.0,
            r_pu: 0.001,
            x_pu: 0.01,
            mva_rating: 250.0,
            tap_ratio: 0.0,
            system_mva_base: 100.0,
        },
    ];
    ensure(case.branches == expected, format!("parsed {:?}", case.branches))?;

    let csv = serialize_branch_csv(&expected);
    let back = parse_branch_csv(csv.as_bytes()).map_err(|e| e.to_string())?;
    ensure(back == expected, "csv round trip changed records")?;
    ensure(serialize_branch_csv(&back) == csv, "csv round trip changed text")?;

    for (flag, file, line) in [("--branches", "bad_x.csv", ":3:"), ("--case", "unknown_bus.m", ":9:")] {
        let out = gridstat(&["analyze", flag, &fixture(file)]);
        let err = String::from_utf8_lossy(&out.stderr);
        ensure(out.status.code() == Some(1), format!("{file}: exit {:?}", out.status.code()))?;
        ensure(err.contains(&format!("{file}{line}")), format!("{file}: message `{}`", err.trim()))?;
    }
    Ok("fixture parsed, csv round trip identical, malformed inputs exit 1 with line numbers".into())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let case = dir.path().join("case.m");
    let case_s = case.display().to_string();
    let first = gridstat(&["generate", "--class", "115,138,230", "--n", "2000", "--seed", "7", "--format", "matpower", "--out", &case_s]);
    ensure(first.status.success(), "generate failed")?;
    let runs = [
        vec!["generate", "--class", "115", "--n", "100", "--seed", "7"],
        vec!["generate", "--class", "138", "--n", "100", "--seed", "7", "--format", "branches"],
        vec!["analyze", "--case", &case_s],
        vec!["fit", "--case", &case_s],
        vec!["validate", "--case", &case_s, "--profile", "builtin"],
        vec!["hist", "--case", &case_s],
    ];
    for args in &runs {
        let a = gridstat(args);
        let b = gridstat(args);
        ensure(a.status.code() == b.status.code(), format!("{} exit codes differ", args[0]))?;
        ensure(!a.stdout.is_empty(), format!("{} produced no output", args[0]))?;
        ensure(a.stdout == b.stdout, format!("{} output differs between runs", args[0]))?;
    }
    Ok(format!("{} commands byte-identical across runs", runs.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("profile transcription", profile_transcription),
        ("analytic identities", analytic_identities),
        ("MLE recovery", mle_recovery),
        ("KL correctness", kl_correctness),
        ("decorrelation", decorrelation),
        ("round-trip validation", round_trip_validation),
        ("per-unit conversion", per_unit_conversion),
        ("parser conformance", parser_conformance),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
