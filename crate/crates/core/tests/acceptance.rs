//! Acceptance checks. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaudit::clireport::{Pipeline, RunConfig};
use relaudit::corpus::{generate_corpus, write_corpus_file};
use relaudit::metadata::MetadataTable;
use relaudit::mtgateway::{BackendConfig, BackendDescriptor, BackendKind, FlipRule};
use relaudit::stats::{
    fit_logistic, fit_regression, mcnemar_from_counts, AnalysisRow, DesignMatrix, Dimension,
    FitOptions, McNemarMethod, RegressionSpec,
};
use relaudit::{Gender, Language, Lexicon, RelationshipType, TargetFamily};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn synthetic(id: &str, seed: u64, same: f64, flip: Vec<FlipRule>) -> BackendDescriptor {
    BackendDescriptor {
        backend_id: id.into(),
        kind: BackendKind::Synthetic,
        config: BackendConfig {
            seed: Some(seed),
            same_gender_rate: Some(same),
            different_gender_rate: Some(0.0),
            flip,
            ..BackendConfig::default()
        },
    }
}

fn config_in(dir: &Path, languages: &[Language], backends: Vec<BackendDescriptor>) -> RunConfig {
    let mut cfg = RunConfig::demo();
    cfg.languages = languages.to_vec();
    cfg.backends = backends;
    cfg.output_dir = dir.to_path_buf();
    cfg.cache_dir = dir.join("cache");
    cfg
}

fn run_steps(p: &Pipeline) -> relaudit::clireport::AnalyzeSummary {
    p.generate().unwrap();
    p.translate().unwrap();
    p.evaluate().unwrap();
    p.analyze().unwrap()
}

fn corpus_cardinality() -> Verdict {
    let lexicon = Lexicon::shipped();
    let start = Instant::now();
    let corpora: Vec<_> = Language::ALL
        .iter()
        .map(|&l| (l, generate_corpus(&lexicon, l)))
        .collect();
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    let es = corpora.iter().find(|(l, _)| *l == Language::Spanish).unwrap();
    if es.1.len() != 3000 {
        problems.push(format!("es has {} sentences", es.1.len()));
    }
    for (lang, c) in &corpora {
        let same = c
            .iter()
            .filter(|s| s.relationship_type == RelationshipType::SameGender)
            .count();
        if 2 * same != c.len() {
            problems.push(format!("{lang}: {same} of {} same-gender", c.len()));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    for (lang, c) in &corpora {
        let a = dir.path().join(format!("{lang}-a.csv"));
        let b = dir.path().join(format!("{lang}-b.csv"));
        write_corpus_file(&a, c).unwrap();
        write_corpus_file(&b, &generate_corpus(&lexicon, *lang)).unwrap();
        if std::fs::read(&a).unwrap() != std::fs::read(&b).unwrap() {
            problems.push(format!("{lang}: regeneration differs"));
        }
    }
    if elapsed >= Duration::from_secs(1) {
        problems.push(format!("generation took {elapsed:?}"));
    }
    let sizes: Vec<String> = corpora
        .iter()
        .map(|(l, c)| format!("{l}={}", c.len()))
        .collect();
    check(
        problems.is_empty(),
        format!(
            "{}; 50% same-gender; byte-identical; {:.0} ms {}",
            sizes.join(" "),
            elapsed.as_secs_f64() * 1e3,
            problems.join("; ")
        ),
    )
}

struct SyntheticRun {
    same_accuracy: f64,
    different_min: f64,
    pooled_p: f64,
    elapsed: Duration,
}

/// One backend flips 49% of same-gender possessives, two never flip;
/// Spanish only, so 3000 sentences x 3 backends.
fn synthetic_run() -> SyntheticRun {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        &[Language::Spanish],
        vec![
            synthetic("amazon", 42, 0.49, vec![]),
            synthetic("google", 42, 0.0, vec![]),
            synthetic("microsoft", 42, 0.0, vec![]),
        ],
    );
    let p = Pipeline::new(cfg).unwrap();
    let start = Instant::now();
    let summary = run_steps(&p);
    let elapsed = start.elapsed();
    let model = summary.tables.iter().find(|t| t.name == "model").unwrap();
    let cell = |backend: &str, rel: &str| {
        model
            .cells
            .iter()
            .find(|c| {
                c.value(Dimension::Backend) == Some(backend)
                    && c.value(Dimension::RelationshipType) == Some(rel)
            })
            .unwrap()
    };
    let same = cell("amazon", "same_gender");
    let different_min = model
        .cells
        .iter()
        .filter(|c| c.value(Dimension::RelationshipType) == Some("different_gender"))
        .map(|c| c.n_correct as f64 / c.n as f64)
        .fold(f64::INFINITY, f64::min);
    let pooled = summary
        .mcnemar
        .iter()
        .find(|r| r.grouping == "pooled")
        .unwrap();
    SyntheticRun {
        same_accuracy: same.n_correct as f64 / same.n as f64,
        different_min,
        pooled_p: pooled.result.p_value,
        elapsed,
    }
}

fn synthetic_end_to_end(run: &SyntheticRun) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let rules = vec![
        FlipRule {
            relationship_type: Some(RelationshipType::SameGender),
            subject_gender: None,
            language: None,
            occupation_id: Some("judge".into()),
            rate: 0.85,
        },
        FlipRule {
            relationship_type: Some(RelationshipType::SameGender),
            subject_gender: None,
            language: None,
            occupation_id: Some("athlete".into()),
            rate: 0.34,
        },
    ];
    let cfg = config_in(
        dir.path(),
        &Language::ALL,
        ["amazon", "google", "microsoft"]
            .iter()
            .map(|id| synthetic(id, 42, 0.49, rules.clone()))
            .collect(),
    );
    let summary = run_steps(&Pipeline::new(cfg).unwrap());
    let occ = summary
        .tables
        .iter()
        .find(|t| t.name == "occupation")
        .unwrap();
    let same = |id: &str| {
        let c = occ
            .cells
            .iter()
            .find(|c| {
                c.value(Dimension::Occupation) == Some(id)
                    && c.value(Dimension::RelationshipType) == Some("same_gender")
            })
            .unwrap();
        c.n_correct as f64 / c.n as f64
    };
    let (judge, athlete) = (same("judge"), same("athlete"));
    let ok = (run.same_accuracy - 0.51).abs() <= 0.03
        && run.different_min == 1.0
        && (judge - 0.15).abs() <= 0.04
        && (athlete - 0.66).abs() <= 0.04
        && run.elapsed < Duration::from_secs(30);
    check(
        ok,
        format!(
            "same-gender {:.4} (0.51 +/- 0.03), different-gender min {:.4}, judge {judge:.4}, athlete {athlete:.4}, 9000 pairs in {:.2} s",
            run.same_accuracy,
            run.different_min,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn mcnemar_oracle(run: &SyntheticRun) -> Verdict {
    let mut worst_exact = 0.0f64;
    for n in 0..=25u64 {
        for b in 0..=n {
            let c = n - b;
            let k = b.min(c);
            let tail: u128 = (0..=k).map(|i| binomial(n, i)).sum();
            let expected = (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0);
            let got = mcnemar_from_counts(b, c);
            if got.method != McNemarMethod::ExactBinomial {
                return Verdict::Fail(format!("({b},{c}) did not use the exact test"));
            }
            worst_exact = worst_exact.max((got.p_value - expected).abs());
        }
    }
    let mut worst_chi = 0.0f64;
    for (b, c) in [(0, 26), (13, 13), (20, 10), (3, 40), (100, 150), (0, 735), (512, 498)] {
        let got = mcnemar_from_counts(b, c);
        let d = (b as f64 - c as f64).abs() - 1.0;
        let expected = d * d / (b + c) as f64;
        worst_chi = worst_chi.max((got.statistic - expected).abs());
        if got.method != McNemarMethod::ChiSquareCC {
            return Verdict::Fail(format!("({b},{c}) did not use the chi-square branch"));
        }
    }
    check(
        worst_exact <= 1e-12 && worst_chi <= 1e-12 && run.pooled_p < 0.001,
        format!(
            "exact max error {worst_exact:.1e}, chi-square max error {worst_chi:.1e}, synthetic pooled p={:.3e}",
            run.pooled_p
        ),
    )
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Log-likelihood coded separately from the library.
fn oracle_ll(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, yi)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum()
}

/// Newton iterations with an analytic Hessian solved by Gaussian elimination
/// with partial pivoting.
fn oracle_newton(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut beta = vec![0.0; k];
    for _ in 0..200 {
        let mut g = vec![0.0; k];
        let mut h = vec![vec![0.0; k]; k];
        for (row, yi) in x.iter().zip(y) {
            let p = sigmoid(row.iter().zip(&beta).map(|(a, b)| a * b).sum());
            for i in 0..k {
                g[i] += (yi - p) * row[i];
                for j in 0..k {
                    h[i][j] += p * (1.0 - p) * row[i] * row[j];
                }
            }
        }
        let mut a: Vec<Vec<f64>> = h
            .into_iter()
            .zip(&g)
            .map(|(mut r, gi)| {
                r.push(*gi);
                r
            })
            .collect();
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in col + 1..k {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
        let mut step = vec![0.0; k];
        for r in (0..k).rev() {
            let s: f64 = (r + 1..k).map(|c| a[r][c] * step[c]).sum();
            step[r] = (a[r][k] - s) / a[r][r];
        }
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if step.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
    }
    beta
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<AnalysisRow> {
    let backends = ["amazon", "google", "microsoft"];
    (0..n)
        .map(|i| AnalysisRow {
            sentence_id: format!("mc-{i}"),
            backend_id: backends[rng.gen_range(0..3)].into(),
            correct: rng.gen_bool(0.5),
            subject_gender: Gender::ALL[rng.gen_range(0..2)],
            language: Language::ALL[rng.gen_range(0..3)],
            target_family: TargetFamily::ALL[rng.gen_range(0..3)],
            occupation_id: format!("occ{}", rng.gen_range(0..50)),
            median_income: rng.gen_range(20_000.0..200_000.0),
            pct_female: rng.gen_range(2.0..98.0),
            median_age: rng.gen_range(25.0..60.0),
        })
        .collect()
}

fn regression_oracle() -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // Gradient against central differences of the library likelihood.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, k) = (150, 4);
    let mut xs = Vec::with_capacity(n * k);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        xs.push(1.0);
        for _ in 1..k {
            xs.push(rng.gen_range(-2.0..2.0));
        }
        ys.push(rng.gen_bool(0.4));
    }
    let names = (0..k).map(|j| format!("x{j}")).collect();
    let design = DesignMatrix::new(names, xs, ys);
    let model = design.model();
    let mut worst_grad = 0.0f64;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = model.gradient(&beta);
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..k {
            let h = 1e-5;
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (model.log_likelihood(&up) - model.log_likelihood(&dn)) / (2.0 * h);
            worst_grad = worst_grad.max((fd - g[j]).abs() / scale);
        }
    }
    ok &= worst_grad <= 1e-6;
    notes.push(format!("gradient rel error {worst_grad:.1e}"));

    // Eight-row fixture against the independent Newton solver.
    let x8: Vec<Vec<f64>> = [
        [1.0, 0.0, -1.2],
        [1.0, 0.0, 0.3],
        [1.0, 0.0, 1.1],
        [1.0, 0.0, -0.4],
        [1.0, 1.0, 0.9],
        [1.0, 1.0, -0.7],
        [1.0, 1.0, 1.6],
        [1.0, 1.0, 0.2],
    ]
    .iter()
    .map(|r| r.to_vec())
    .collect();
    let y8 = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    let design8 = DesignMatrix::new(
        vec!["Intercept".into(), "d".into(), "x".into()],
        x8.iter().flatten().copied().collect(),
        y8.iter().map(|&v| v == 1.0).collect(),
    );
    let fit8 = fit_logistic(&design8, &FitOptions::default()).unwrap();
    let oracle = oracle_newton(&x8, &y8);
    let worst8 = fit8
        .coefficients
        .iter()
        .zip(&oracle)
        .map(|(c, o)| (c.estimate - o).abs())
        .fold(0.0f64, f64::max);
    let ll_gap = (fit8.log_likelihood - oracle_ll(&x8, &y8, &oracle)).abs();
    ok &= worst8 <= 1e-4 && ll_gap <= 1e-8;
    notes.push(format!("8-row max diff {worst8:.1e}"));

    // Monte Carlo recovery.
    let truth = [
        ("Intercept", 1.3),
        ("Male", -0.57),
        ("Italian", -0.53),
        ("Spanish", 0.52),
        ("Google", -0.71),
        ("Microsoft", -1.53),
        ("Boy/girlfriend", -0.40),
        ("Husband/wife", -2.98),
        ("Income", -0.19),
        ("Female representation", -0.31),
        ("Age", -0.12),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut rows = random_rows(&mut rng, 20_000);
    let zs = |f: fn(&AnalysisRow) -> f64, rows: &[AnalysisRow]| -> Vec<f64> {
        let v: Vec<f64> = rows.iter().map(f).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        v.iter().map(|x| (x - m) / sd).collect()
    };
    let income = zs(|r| r.median_income, &rows);
    let female = zs(|r| r.pct_female, &rows);
    let age = zs(|r| r.median_age, &rows);
    let beta = |t: &str| truth.iter().find(|(n, _)| *n == t).unwrap().1;
    for (i, r) in rows.iter_mut().enumerate() {
        let mut eta = beta("Intercept")
            + beta("Income") * income[i]
            + beta("Female representation") * female[i]
            + beta("Age") * age[i];
        if r.subject_gender == Gender::Male {
            eta += beta("Male");
        }
        eta += match r.language {
            Language::Italian => beta("Italian"),
            Language::Spanish => beta("Spanish"),
            Language::French => 0.0,
        };
        eta += match r.backend_id.as_str() {
            "google" => beta("Google"),
            "microsoft" => beta("Microsoft"),
            _ => 0.0,
        };
        eta += match r.target_family {
            TargetFamily::BoyGirlfriend => beta("Boy/girlfriend"),
            TargetFamily::HusbandWife => beta("Husband/wife"),
            TargetFamily::Fiance => 0.0,
        };
        r.correct = rng.gen::<f64>() < sigmoid(eta);
    }
    let fit = fit_regression(&RegressionSpec::default(), &rows).unwrap();
    let mut worst_se = 0.0f64;
    for (term, b) in truth {
        let c = fit.coefficient(term).unwrap();
        worst_se = worst_se.max((c.estimate - b).abs() / c.std_error);
    }
    ok &= worst_se < 3.0;
    notes.push(format!("Monte Carlo worst |err|/SE {worst_se:.2}"));

    // LLR sign and affine invariance.
    let mut min_llr = f64::INFINITY;
    let mut worst_affine = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let rows = random_rows(&mut rng, 500);
        let base = fit_regression(&RegressionSpec::default(), &rows).unwrap();
        min_llr = min_llr.min(base.llr);
        let scaled: Vec<AnalysisRow> = rows
            .iter()
            .map(|r| AnalysisRow {
                median_income: r.median_income / 1000.0 - 5.0,
                pct_female: 0.01 * r.pct_female,
                median_age: 2.5 * r.median_age + 100.0,
                ..r.clone()
            })
            .collect();
        let other = fit_regression(&RegressionSpec::default(), &scaled).unwrap();
        for (a, b) in base.coefficients.iter().zip(&other.coefficients) {
            for d in [
                a.estimate - b.estimate,
                a.std_error - b.std_error,
                a.z - b.z,
                a.p_value - b.p_value,
            ] {
                worst_affine = worst_affine.max(d.abs());
            }
        }
        worst_affine = worst_affine
            .max((base.llr - other.llr).abs())
            .max((base.log_likelihood - other.log_likelihood).abs());
    }
    ok &= min_llr >= 0.0 && worst_affine <= 1e-10;
    notes.push(format!("min LLR {min_llr:.3}, affine max diff {worst_affine:.1e}"));

    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    notes.push(format!("{:.2} s", elapsed.as_secs_f64()));
    check(ok, notes.join(", "))
}

fn released_data_reproduction() -> Verdict {
    let Some(path) = std::env::var_os("RELAUDIT_RELEASED_OUTCOMES").map(PathBuf::from) else {
        return Verdict::Skip("RELAUDIT_RELEASED_OUTCOMES not set; released outcome data absent".into());
    };
    let table = [
        ("Intercept", 1.3091),
        ("Male", -0.5664),
        ("Italian", -0.5329),
        ("Spanish", 0.5156),
        ("Google", -0.7138),
        ("Microsoft", -1.5303),
        ("Boy/girlfriend", -0.3981),
        ("Husband/wife", -2.9832),
        ("Income", -0.1915),
        ("Female representation", -0.3110),
        ("Age", -0.1227),
    ];
    let (rows, dropped) =
        match relaudit::clireport::load_regression_rows(&path, &MetadataTable::shipped()) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
    let fit = match fit_regression(&RegressionSpec::default(), &rows) {
        Ok(f) => f,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let mut worst = 0.0f64;
    for (term, b) in table {
        match fit.coefficient(term) {
            Some(c) => worst = worst.max((c.estimate - b).abs()),
            None => return Verdict::Fail(format!("no `{term}` coefficient")),
        }
    }
    check(
        worst <= 0.01 && fit.n == 11070 && fit.df == 10 && (fit.llr - 3758.0).abs() <= 1.0,
        format!(
            "max coefficient diff {worst:.4}, N={} ({dropped} dropped), d.f.={}, LLR={:.1}",
            fit.n, fit.df, fit.llr
        ),
    )
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for d in &dirs {
        let mut cfg = RunConfig::demo();
        cfg.apply_overrides(Some(7), None, None, Some(d.path())).unwrap();
        let p = Pipeline::new(cfg).unwrap();
        relaudit::clireport::run_all(&p).unwrap();
        reports.push(files_under(&p.analysis_dir()));
        outcomes.push(std::fs::read(p.outcomes_path()).unwrap());
    }
    let same_reports = reports[0] == reports[1] && !reports[0].is_empty();
    let same_outcomes = outcomes[0] == outcomes[1];

    let mut cfg = RunConfig::demo();
    cfg.apply_overrides(Some(7), None, None, Some(dirs[0].path()))
        .unwrap();
    let again = Pipeline::new(cfg).unwrap().translate().unwrap();
    let calls = again.backend_calls();
    check(
        same_reports && same_outcomes && calls == 0,
        format!(
            "{} report files identical: {same_reports}; outcomes identical: {same_outcomes}; second translate backend calls: {calls}",
            reports[0].len()
        ),
    )
}

fn main() {
    let run = synthetic_run();
    let results = [
        ("1 corpus cardinality", corpus_cardinality()),
        ("2 synthetic end-to-end", synthetic_end_to_end(&run)),
        ("3 McNemar oracle", mcnemar_oracle(&run)),
        ("4 logistic regression oracle", regression_oracle()),
        ("5 released-data reproduction", released_data_reproduction()),
        ("6 determinism and idempotence", determinism()),
    ];
    let mut failed = Vec::new();
    for (name, verdict) in &results {
        match verdict {
            Verdict::Pass(d) => println!("PASS {name}: {d}"),
            Verdict::Skip(d) => println!("SKIP {name}: {d}"),
            Verdict::Fail(d) => {
                println!("FAIL {name}: {d}");
                failed.push(*name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
