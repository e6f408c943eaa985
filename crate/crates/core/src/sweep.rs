//! Parameter sweeps and the CSV writer behind every command.
//!
//! Floats are written with 17 significant digits in scientific notation,
//! rows end in `\n`, and rows come out in sweep order whatever order the
//! parallel workers finish in, so the same configuration and seed always
//! produce the same bytes.

use rayon::prelude::*;

use crate::analytic::AnalysisReport;
use crate::config::{RunConfig, SweepVar};
use crate::error::Result;
use crate::model::{PolicyFb, PolicyNoFb, Scheme};
use crate::optimizer::{solve, OptProblem, OptResult};
use crate::sim::SimStats;
use crate::validate::ValidationReport;

/// Full-precision float field.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_bool(b: bool) -> String {
    u8::from(b).to_string()
}

/// A CSV document with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &'static [&'static str]) -> Self {
        Csv {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Restricts a policy to the components a scheme can use.
pub fn policy_for_scheme(scheme: Scheme, policy: PolicyFb) -> PolicyFb {
    match scheme {
        Scheme::Feedback => policy,
        Scheme::NoFeedback => PolicyFb {
            access_retx: 0.0,
            ..policy
        },
        Scheme::RandomAccess => PolicyFb {
            base: PolicyNoFb {
                sense: 0.0,
                access_free: 0.0,
                access_busy: 0.0,
                ..policy.base
            },
            access_retx: 0.0,
        },
    }
}

const POLICY_COLUMNS: [&str; 5] = [
    "sense",
    "access_free",
    "access_busy",
    "access_direct",
    "access_retx",
];

fn policy_fields(p: &PolicyFb) -> impl Iterator<Item = String> {
    p.to_array().into_iter().map(fmt_f64)
}

pub const SWEEP_HEADER: &[&str] = &[
    "series_var",
    "series_value",
    "sweep_var",
    "sweep_value",
    "scheme",
    "mu_s",
    "mu_p",
    "delay",
    POLICY_COLUMNS[0],
    POLICY_COLUMNS[1],
    POLICY_COLUMNS[2],
    POLICY_COLUMNS[3],
    POLICY_COLUMNS[4],
    "feasible",
];

/// One optimized point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub series: Option<(SweepVar, f64)>,
    pub var: SweepVar,
    pub value: f64,
    pub result: OptResult,
}

impl SweepRow {
    fn fields(&self) -> Vec<String> {
        let (sv, sx) = match self.series {
            Some((v, x)) => (v.name().to_string(), fmt_f64(x)),
            None => (String::new(), String::new()),
        };
        let r = &self.result;
        let mut f = vec![
            sv,
            sx,
            self.var.name().to_string(),
            fmt_f64(self.value),
            r.scheme.name().to_string(),
            fmt_f64(r.mu_s),
            fmt_f64(r.mu_p),
            fmt_f64(r.delay),
        ];
        f.extend(policy_fields(&r.policy));
        f.push(fmt_bool(r.feasible));
        f
    }
}

/// Optimizes every (series value, sweep value, scheme) triple of the
/// configuration. Schemes vary fastest, then sweep values, then series.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let grid = config
        .sweep
        .as_ref()
        .ok_or_else(|| crate::Error::Config("no [sweep] section".into()))?;
    let xs = grid.axis().points()?;
    let series: Vec<Option<(SweepVar, f64)>> = match &grid.series {
        Some(axis) => axis
            .points()?
            .into_iter()
            .map(|v| Some((axis.variable, v)))
            .collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for s in &series {
        for &x in &xs {
            for &scheme in &config.schemes {
                jobs.push((*s, x, scheme));
            }
        }
    }
    jobs.par_iter()
        .map(|&(s, x, scheme)| {
            let mut assign: Vec<(SweepVar, f64)> = s.into_iter().collect();
            assign.push((grid.variable, x));
            let pt = config.point(&assign)?;
            let problem = OptProblem::new(scheme, pt.profile, config.sensing, pt.traffic)?;
            Ok(SweepRow {
                series: s,
                var: grid.variable,
                value: x,
                result: solve(&problem, &config.solver)?,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Csv {
    let mut csv = Csv::new(SWEEP_HEADER);
    for r in rows {
        csv.push(r.fields());
    }
    csv
}

pub const OPTIMIZE_HEADER: &[&str] = &[
    "scheme",
    "lambda_p",
    "lambda_e",
    "delay_bound",
    "mu_s",
    "mu_p",
    "delay",
    POLICY_COLUMNS[0],
    POLICY_COLUMNS[1],
    POLICY_COLUMNS[2],
    POLICY_COLUMNS[3],
    POLICY_COLUMNS[4],
    "feasible",
    "starts",
    "iterations",
];

pub fn optimize_csv(config: &RunConfig, results: &[OptResult]) -> Csv {
    let t = &config.traffic;
    let mut csv = Csv::new(OPTIMIZE_HEADER);
    for r in results {
        let mut f = vec![
            r.scheme.name().to_string(),
            fmt_f64(t.lambda_p),
            fmt_f64(t.lambda_e),
            fmt_f64(t.delay_bound),
            fmt_f64(r.mu_s),
            fmt_f64(r.mu_p),
            fmt_f64(r.delay),
        ];
        f.extend(policy_fields(&r.policy));
        f.push(fmt_bool(r.feasible));
        f.push(r.meta.starts.to_string());
        f.push(r.meta.iterations.to_string());
        csv.push(f);
    }
    csv
}

pub const ANALYZE_HEADER: &[&str] = &[
    "scheme",
    "lambda_p",
    "lambda_e",
    "delay_bound",
    POLICY_COLUMNS[0],
    POLICY_COLUMNS[1],
    POLICY_COLUMNS[2],
    POLICY_COLUMNS[3],
    POLICY_COLUMNS[4],
    "mu_p",
    "mu_s",
    "idle_prob",
    "delay",
    "primary_stable",
    "delay_feasible",
    "feasible",
];

pub fn analyze_csv(config: &RunConfig, reports: &[(PolicyFb, AnalysisReport)]) -> Csv {
    let t = &config.traffic;
    let mut csv = Csv::new(ANALYZE_HEADER);
    for (policy, r) in reports {
        let mut f = vec![
            r.scheme.name().to_string(),
            fmt_f64(t.lambda_p),
            fmt_f64(t.lambda_e),
            fmt_f64(t.delay_bound),
        ];
        f.extend(policy_fields(policy));
        f.extend([
            fmt_f64(r.mu_p),
            fmt_f64(r.mu_s),
            fmt_f64(r.idle_prob),
            fmt_f64(r.delay),
            fmt_bool(r.primary_stable),
            fmt_bool(r.delay_feasible),
            fmt_bool(r.feasible()),
        ]);
        csv.push(f);
    }
    csv
}

pub const SIMULATE_HEADER: &[&str] = &[
    "scheme",
    "semantics",
    "rng",
    "seed",
    "slots",
    "mu_p",
    "mu_p_se",
    "mu_s",
    "mu_s_se",
    "mu_e",
    "mu_e_se",
    "delay",
    "delay_se",
    "mean_qp",
    "mean_qp_se",
    "empty_frac_p",
    "empty_frac_p_se",
    "retx_frac",
    "retx_frac_se",
    "primary_departures",
    "secondary_departures",
    "primary_drifts",
];

pub fn simulate_csv(runs: &[(Scheme, u64, SimStats)]) -> Csv {
    let mut csv = Csv::new(SIMULATE_HEADER);
    for (scheme, seed, s) in runs {
        let mut f = vec![
            scheme.name().to_string(),
            s.semantics.name().to_string(),
            s.rng.to_string(),
            seed.to_string(),
            s.slots.to_string(),
        ];
        for e in [
            &s.mu_p,
            &s.mu_s,
            &s.mu_e,
            &s.delay,
            &s.mean_qp,
            &s.empty_frac_p,
            &s.retx_frac,
        ] {
            f.push(fmt_f64(e.mean));
            f.push(fmt_f64(e.std_err));
        }
        f.push(s.primary_departures.to_string());
        f.push(s.secondary_departures.to_string());
        f.push(fmt_bool(s.primary_drifts()));
        csv.push(f);
    }
    csv
}

pub const VALIDATE_HEADER: &[&str] = &[
    "report",
    "check",
    "measured",
    "reference",
    "residual",
    "bound",
    "one_sided",
    "asserted",
    "pass",
];

pub fn validation_csv(reports: &[ValidationReport]) -> Csv {
    let mut csv = Csv::new(VALIDATE_HEADER);
    for r in reports {
        for c in &r.checks {
            csv.push(vec![
                format!("\"{}\"", r.title.replace('"', "'")),
                format!("\"{}\"", c.name),
                fmt_f64(c.measured),
                fmt_f64(c.reference),
                fmt_f64(c.residual),
                fmt_f64(c.bound),
                fmt_bool(c.one_sided),
                fmt_bool(c.asserted),
                fmt_bool(c.pass),
            ]);
        }
    }
    csv
}
