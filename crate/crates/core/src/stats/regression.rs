//! Logistic regression fitted by iteratively reweighted least squares.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use super::linalg::{dependent_columns, Cholesky, SquareMatrix};
use super::StatsError;
use crate::corpus::{capitalize_first, Gender, Language, TargetFamily};

/// One same-gender outcome with complete occupation covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub sentence_id: String,
    pub backend_id: String,
    pub correct: bool,
    pub subject_gender: Gender,
    pub language: Language,
    pub target_family: TargetFamily,
    pub occupation_id: String,
    pub median_income: f64,
    pub pct_female: f64,
    pub median_age: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    SubjectGender,
    Language,
    Model,
    RelationshipTarget,
    Income,
    FemaleRepresentation,
    Age,
}

impl Predictor {
    pub const ALL: [Predictor; 7] = [
        Predictor::SubjectGender,
        Predictor::Language,
        Predictor::Model,
        Predictor::RelationshipTarget,
        Predictor::Income,
        Predictor::FemaleRepresentation,
        Predictor::Age,
    ];

    fn scalar(self, row: &AnalysisRow) -> Option<f64> {
        match self {
            Predictor::Income => Some(row.median_income),
            Predictor::FemaleRepresentation => Some(row.pct_female),
            Predictor::Age => Some(row.median_age),
            _ => None,
        }
    }

    fn scalar_label(self) -> &'static str {
        match self {
            Predictor::Income => "Income",
            Predictor::FemaleRepresentation => "Female representation",
            _ => "Age",
        }
    }
}

/// Predictors and dummy-coding reference levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSpec {
    pub predictors: Vec<Predictor>,
    pub subject_gender_reference: Gender,
    pub language_reference: Language,
    /// Falls back to the alphabetically first backend when absent from the data.
    pub model_reference: String,
    pub target_reference: TargetFamily,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            predictors: Predictor::ALL.to_vec(),
            subject_gender_reference: Gender::Female,
            language_reference: Language::French,
            model_reference: "amazon".into(),
            target_reference: TargetFamily::Fiance,
        }
    }
}

/// Standardizes present entries to sample mean 0 and sample sd 1.
pub fn znormalize(values: &[Option<f64>]) -> Result<Vec<Option<f64>>, StatsError> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return Err(StatsError::ZeroVariance(format!(
            "{} non-missing value(s), need at least 2",
            present.len()
        )));
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || sd <= 1e-12 * mean.abs() {
        return Err(StatsError::ZeroVariance("all values are equal".into()));
    }
    Ok(values.iter().map(|v| v.map(|x| (x - mean) / sd)).collect())
}

/// A block of design columns sharing one predictor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnGroup {
    pub label: String,
    pub columns: Vec<usize>,
}

/// Dense design with an intercept in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub groups: Vec<ColumnGroup>,
    rows: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DesignMatrix {
    /// Raw constructor: `x` is row-major with `names.len()` columns.
    pub fn new(names: Vec<String>, x: Vec<f64>, y: Vec<bool>) -> Self {
        assert_eq!(x.len(), names.len() * y.len(), "design shape mismatch");
        let columns = (1..names.len()).collect();
        DesignMatrix {
            groups: vec![ColumnGroup {
                label: String::new(),
                columns,
            }],
            names,
            rows: y.len(),
            x,
            y: y.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.cols();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn model(&self) -> LogisticModel<'_> {
        LogisticModel { design: self }
    }

    pub fn group_of(&self, column: usize) -> Option<&ColumnGroup> {
        self.groups.iter().find(|g| g.columns.contains(&column))
    }
}

struct Categorical {
    label: String,
    levels: Vec<(String, Vec<bool>)>,
}

fn categorical<'r, L: PartialEq + Copy>(
    rows: &'r [AnalysisRow],
    order: &[L],
    reference: L,
    key: impl Fn(&'r AnalysisRow) -> L,
    name: impl Fn(L) -> String,
    group: impl Fn(&str) -> String,
) -> Categorical {
    let present: Vec<L> = order
        .iter()
        .copied()
        .filter(|l| rows.iter().any(|r| key(r) == *l))
        .collect();
    let reference = if present.contains(&reference) {
        reference
    } else {
        present.first().copied().unwrap_or(reference)
    };
    let levels = present
        .iter()
        .copied()
        .filter(|l| *l != reference)
        .map(|l| (name(l), rows.iter().map(|r| key(r) == l).collect()))
        .collect();
    Categorical {
        label: group(&name(reference)),
        levels,
    }
}

/// Dummy-codes categoricals against their references and z-normalizes
/// scalars over `rows`. A categorical with one observed level adds nothing.
pub fn build_design(spec: &RegressionSpec, rows: &[AnalysisRow]) -> Result<DesignMatrix, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut names = vec!["Intercept".to_string()];
    let mut groups = vec![ColumnGroup {
        label: String::new(),
        columns: vec![0],
    }];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; rows.len()]];
    let mut scalar_group: Option<usize> = None;

    for predictor in Predictor::ALL {
        if !spec.predictors.contains(&predictor) {
            continue;
        }
        let cat = match predictor {
            Predictor::SubjectGender => Some(categorical(
                rows,
                &Gender::ALL,
                spec.subject_gender_reference,
                |r| r.subject_gender,
                |g| capitalize_first(g.as_str()),
                |r| format!("Subject gender (default {})", r.to_lowercase()),
            )),
            Predictor::Language => Some(categorical(
                rows,
                &Language::ALL,
                spec.language_reference,
                |r| r.language,
                |l| l.name().to_string(),
                |r| format!("Language (default {r})"),
            )),
            Predictor::Model => {
                let mut ids: Vec<&str> = rows.iter().map(|r| r.backend_id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                Some(categorical(
                    rows,
                    &ids,
                    spec.model_reference.as_str(),
                    |r| r.backend_id.as_str(),
                    capitalize_first,
                    |r| format!("Model (default {r})"),
                ))
            }
            Predictor::RelationshipTarget => Some(categorical(
                rows,
                &TargetFamily::ALL,
                spec.target_reference,
                |r| r.target_family,
                |t| t.label().to_string(),
                |r| format!("Relationship target (default {})", r.to_lowercase()),
            )),
            _ => None,
        };
        match cat {
            Some(cat) => {
                if cat.levels.is_empty() {
                    continue;
                }
                let mut idx = Vec::new();
                for (name, mask) in cat.levels {
                    idx.push(names.len());
                    names.push(name);
                    columns.push(mask.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect());
                }
                groups.push(ColumnGroup {
                    label: cat.label,
                    columns: idx,
                });
            }
            None => {
                let raw: Vec<Option<f64>> = rows.iter().map(|r| predictor.scalar(r)).collect();
                let z = znormalize(&raw).map_err(|e| match e {
                    StatsError::ZeroVariance(m) => {
                        StatsError::ZeroVariance(format!("{}: {m}", predictor.scalar_label()))
                    }
                    other => other,
                })?;
                let g = *scalar_group.get_or_insert_with(|| {
                    groups.push(ColumnGroup {
                        label: "Occupation variables".into(),
                        columns: Vec::new(),
                    });
                    groups.len() - 1
                });
                groups[g].columns.push(names.len());
                names.push(predictor.scalar_label().to_string());
                columns.push(z.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect());
            }
        }
    }

    let p = names.len();
    let mut x = Vec::with_capacity(rows.len() * p);
    for i in 0..rows.len() {
        x.extend(columns.iter().map(|c| c[i]));
    }
    Ok(DesignMatrix {
        names,
        groups,
        rows: rows.len(),
        x,
        y: rows.iter().map(|r| if r.correct { 1.0 } else { 0.0 }).collect(),
    })
}

/// log(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood with logit link over a design.
#[derive(Debug, Clone, Copy)]
pub struct LogisticModel<'a> {
    design: &'a DesignMatrix,
}

impl LogisticModel<'_> {
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.design.rows())
            .map(|i| self.design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        self.linear_predictor(beta)
            .iter()
            .zip(self.design.response())
            .map(|(eta, y)| y * eta - softplus(*eta))
            .sum()
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; beta.len()];
        for (i, eta) in self.linear_predictor(beta).into_iter().enumerate() {
            let r = self.design.response()[i] - sigmoid(eta);
            for (gj, xj) in g.iter_mut().zip(self.design.row(i)) {
                *gj += r * xj;
            }
        }
        g
    }

    /// Observed (equal to expected, for the canonical link) information XᵀWX.
    pub fn information(&self, beta: &[f64]) -> SquareMatrix {
        let p = beta.len();
        let mut m = SquareMatrix::zeros(p);
        for (i, eta) in self.linear_predictor(beta).into_iter().enumerate() {
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let row = self.design.row(i);
            for a in 0..p {
                let wa = w * row[a];
                for b in 0..=a {
                    m.add(a, b, wa * row[b]);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                m.set(b, a, m.get(a, b));
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub step_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_ll_tolerance: f64,
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            relative_ll_tolerance: 1e-10,
            separation_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub group: String,
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub df: usize,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub llr: f64,
    pub llr_p_value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn check_rank(design: &DesignMatrix) -> Result<(), StatsError> {
    let dep = dependent_columns(design.rows(), design.cols(), |i, j| design.at(i, j));
    if dep.is_empty() {
        return Ok(());
    }
    let parts: Vec<String> = dep
        .iter()
        .map(|(j, loads)| {
            if loads.is_empty() {
                format!("`{}` is identically zero", design.names[*j])
            } else {
                let others: Vec<String> =
                    loads.iter().map(|k| format!("`{}`", design.names[*k])).collect();
                format!(
                    "`{}` is collinear with {}",
                    design.names[*j],
                    others.join(", ")
                )
            }
        })
        .collect();
    Err(StatsError::RankDeficient(parts.join("; ")))
}

/// An indicator column whose ones all share a single response value
/// sends its coefficient to infinity.
fn indicator_separation(design: &DesignMatrix) -> Option<String> {
    for j in 1..design.cols() {
        let mut seen = [false, false];
        let mut is_indicator = true;
        for i in 0..design.rows() {
            let v = design.at(i, j);
            if v != 0.0 && v != 1.0 {
                is_indicator = false;
                break;
            }
            if v == 1.0 {
                seen[design.response()[i] as usize] = true;
            }
        }
        if is_indicator && (seen[0] != seen[1]) {
            return Some(design.names[j].clone());
        }
    }
    None
}

fn separation(design: &DesignMatrix, beta: &[f64]) -> StatsError {
    let (j, b) = beta
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, b)| (j, *b))
        .unwrap_or((0, beta[0]));
    StatsError::Separation {
        column: design.names[j].clone(),
        estimate: b,
    }
}

/// Maximum-likelihood fit by Newton–Raphson with step halving.
pub fn fit_logistic(design: &DesignMatrix, opts: &FitOptions) -> Result<RegressionResult, StatsError> {
    let n = design.rows();
    let p = design.cols();
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }
    let y = design.response();
    let n1 = y.iter().sum::<f64>();
    if n1 == 0.0 || n1 == n as f64 {
        return Err(StatsError::NoResponseVariance(n1 > 0.0));
    }
    check_rank(design)?;
    if let Some(column) = indicator_separation(design) {
        return Err(StatsError::Separation {
            column,
            estimate: f64::INFINITY,
        });
    }

    let model = design.model();
    let ybar = n1 / n as f64;
    let mut beta = vec![0.0; p];
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut ll = model.log_likelihood(&beta);
    let mut trace = Vec::new();
    let mut converged = false;

    for iteration in 1..=opts.max_iterations {
        let g = model.gradient(&beta);
        let gnorm = max_abs(&g);
        if gnorm < opts.gradient_tolerance {
            trace.push(IterationTrace {
                iteration,
                log_likelihood: ll,
                gradient_norm: gnorm,
                step_scale: 0.0,
            });
            converged = true;
            break;
        }
        let info = model.information(&beta);
        let chol = match Cholesky::new(&info) {
            Ok(c) => c,
            Err(_) if max_abs(&beta[1..]) > opts.separation_bound / 2.0 => {
                return Err(separation(design, &beta))
            }
            Err(_) => return Err(StatsError::Singular(iteration)),
        };
        let step = chol.solve(&g);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_ll = model.log_likelihood(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        trace.push(IterationTrace {
            iteration,
            log_likelihood: ll,
            gradient_norm: gnorm,
            step_scale: scale,
        });
        let Some((cand, cand_ll)) = accepted else {
            break;
        };
        let rel = (cand_ll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        beta = cand;
        ll = cand_ll;
        if max_abs(&beta[1..]) > opts.separation_bound {
            return Err(separation(design, &beta));
        }
        if rel < opts.relative_ll_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(StatsError::NonConvergence { trace });
    }

    let info = model.information(&beta);
    let cov = Cholesky::new(&info)
        .map_err(|_| StatsError::Singular(trace.len()))?
        .inverse();
    let eta = model.linear_predictor(&beta);
    let fitted: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
    // Quasi-complete separation: converged only because the likelihood
    // flattened with some rows fitted to within 1e-8 of certainty.
    if eta.iter().any(|e| e.abs() > 18.42) {
        return Err(separation(design, &beta));
    }

    let coefficients = (0..p)
        .map(|j| {
            let se = cov.get(j, j).sqrt();
            let z = beta[j] / se;
            Coefficient {
                group: design
                    .group_of(j)
                    .map(|g| g.label.clone())
                    .unwrap_or_default(),
                term: design.names[j].clone(),
                estimate: beta[j],
                std_error: se,
                z,
                p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
            }
        })
        .collect();

    let null_ll = n1 * ybar.ln() + (n as f64 - n1) * (1.0 - ybar).ln();
    let llr = (2.0 * (ll - null_ll)).max(0.0);
    let df = p - 1;
    let llr_p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).map_or(f64::NAN, |d| d.sf(llr))
    };
    Ok(RegressionResult {
        coefficients,
        n,
        df,
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        llr,
        llr_p_value,
        iterations: trace.len(),
        gradient_norm: trace.last().map_or(0.0, |t| t.gradient_norm),
        fitted,
    })
}

pub fn fit_regression(spec: &RegressionSpec, rows: &[AnalysisRow]) -> Result<RegressionResult, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if rows.iter().all(|r| r.correct == rows[0].correct) {
        return Err(StatsError::NoResponseVariance(rows[0].correct));
    }
    fit_logistic(&build_design(spec, rows)?, &FitOptions::default())
}

fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }

    /// Plain-text table grouped by predictor; `*` marks p < 0.001.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<44} {:>9} {:>7} {:>9} {:>7}",
            "", "beta", "SE", "Z", "p"
        );
        let rule = "-".repeat(80);
        let mut current: Option<&str> = None;
        for c in &self.coefficients {
            if current != Some(c.group.as_str()) {
                let _ = writeln!(out, "{rule}");
                if !c.group.is_empty() {
                    let _ = writeln!(out, "{}", c.group);
                }
                current = Some(c.group.as_str());
            }
            let indent = if c.group.is_empty() { "" } else { "  " };
            let star = if c.p_value < 0.001 { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<44} {:>9.4} {:>7.3} {:>9.3} {:>7}{}",
                format!("{indent}{}", c.term),
                c.estimate,
                c.std_error,
                c.z,
                format_p(c.p_value),
                star
            );
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "d.f.={}, N={}, LLR={:.0} (p{}). * indicates p<0.001.",
            self.df,
            self.n,
            self.llr,
            match format_p(self.llr_p_value) {
                s if s.starts_with('<') => s,
                s => format!("={s}"),
            }
        );
        let _ = writeln!(
            out,
            "log-likelihood={:.4}, null log-likelihood={:.4}, iterations={}, final gradient max-norm={:.3e}",
            self.log_likelihood, self.null_log_likelihood, self.iterations, self.gradient_norm
        );
        out
    }

    /// Machine-readable twin of [`to_text`](Self::to_text). Model-level
    /// statistics follow the coefficients as rows in group `model`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "term", "estimate", "std_error", "z", "p_value"])?;
        for c in &self.coefficients {
            w.write_record([
                c.group.clone(),
                c.term.clone(),
                c.estimate.to_string(),
                c.std_error.to_string(),
                c.z.to_string(),
                c.p_value.to_string(),
            ])?;
        }
        let model = [
            ("n", self.n as f64),
            ("df", self.df as f64),
            ("log_likelihood", self.log_likelihood),
            ("null_log_likelihood", self.null_log_likelihood),
            ("llr", self.llr),
            ("llr_p_value", self.llr_p_value),
            ("iterations", self.iterations as f64),
            ("gradient_norm", self.gradient_norm),
        ];
        for (term, v) in model {
            w.write_record(["model", term, &v.to_string(), "", "", ""])?;
        }
        w.flush()?;
        Ok(())
    }
}
