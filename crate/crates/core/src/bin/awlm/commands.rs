use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use awlm::axioms::{
    check_intra_aspiration, check_leverage_line, check_proportional_response,
    check_radial_consistency, estimate_lambda, group_by_level, recover_per_menu, CheckReport,
    LevelFit, LevelSlice, LeverageProfile,
};
use awlm::gmm::{self, JacobianPlugIn, SearchConfig, WeightKind, WeightSpec};
use awlm::ident::{
    all_pairs, design_genericity_check, ls_alpha, ls_p0, rationalizability_check,
    recover_alpha_pair, AlphaClass, Design, ExposurePair, Verdict,
};
use awlm::io::{DatasetFile, Observed};
use awlm::sim::{simulate_dataset, FailureRule, RngSeed};
use awlm::simplex::{dot, sup_dist};
use awlm::{AwlmError, Dist, LuceWeights, ModelParams, Subset, Universe};

use crate::noise::{tolerances, Tolerances};
use crate::report::{digest, read, to_value, write_text, Report};
use crate::{exit, CliError, EstimateArgs, InputArgs, JacobianArg, Kind, SimulateArgs};

/// Restrictions or compositions closer than this are treated as equal.
const MATCH_TOL: f64 = 1e-9;

struct Loaded {
    obs: Observed,
    inputs: Vec<Vec<u8>>,
    warnings: Vec<String>,
}

impl Loaded {
    fn input_slices(&self) -> Vec<&[u8]> {
        self.inputs.iter().map(Vec::as_slice).collect()
    }
}

fn utf8(bytes: &[u8], path: &Path) -> Result<String, CliError> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| CliError::validation(format!("{} is not UTF-8", path.display())))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load(args: &InputArgs) -> Result<Loaded, CliError> {
    let bytes = read(&args.input)?;
    let mut warnings = Vec::new();
    let (file, inputs) = if is_csv(&args.input) {
        let design_path = args.design.as_ref().ok_or_else(|| {
            CliError::validation("CSV counts need --design for menu and exposures")
        })?;
        let design_bytes = read(design_path)?;
        let mut file = DatasetFile::from_json(&utf8(&design_bytes, design_path)?)?;
        file.merge_csv_counts(bytes.as_slice())?;
        (file, vec![bytes, design_bytes])
    } else {
        if args.design.is_some() {
            warnings.push("--design is ignored for JSON datasets".into());
        }
        let file = DatasetFile::from_json(&utf8(&bytes, &args.input)?)?;
        (file, vec![bytes])
    };
    let obs = file.validate()?;
    if obs.has_counts() {
        warnings.push(
            "choice shares computed from counts; exact identities hold only up to sampling noise"
                .into(),
        );
    }
    Ok(Loaded {
        obs,
        inputs,
        warnings,
    })
}

fn labeled(universe: &Universe, s: &Subset, values: &[f64]) -> BTreeMap<String, f64> {
    s.members()
        .iter()
        .zip(values)
        .map(|(&x, &v)| (universe.label(x).to_string(), v))
        .collect()
}

fn labels(universe: &Universe, s: &Subset) -> Vec<String> {
    s.members()
        .iter()
        .map(|&x| universe.label(x).to_string())
        .collect()
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize> {
    #[serde(flatten)]
    args: &'a A,
    tolerances: Tolerances,
}

fn parse_rule(rule: &str) -> Result<FailureRule, CliError> {
    match rule {
        "persist" => Ok(FailureRule::Persist),
        "revert" => Ok(FailureRule::Revert),
        _ => {
            let r = rule
                .strip_prefix("retry:")
                .and_then(|r| r.parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::validation(format!(
                        "unknown rule `{rule}` (persist, revert or retry:<r>)"
                    ))
                })?;
            Ok(FailureRule::Retry(r))
        }
    }
}

fn parse_weights(spec: &str, universe: &Universe, s: &Subset) -> Result<LuceWeights, CliError> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        let path = Path::new(spec);
        utf8(&read(path)?, path)?
    };
    let map: BTreeMap<String, f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("malformed --weights: {e}")))?;
    let mut weights = vec![None; universe.len()];
    for (label, w) in map {
        weights[universe.index_of(&label)?] = Some(w);
    }
    let weights = weights
        .into_iter()
        .enumerate()
        .map(|(x, w)| match w {
            Some(w) => Ok(w),
            None if s.contains(x) => Err(CliError::validation(format!(
                "--weights has no entry for feasible `{}`",
                universe.label(x)
            ))),
            None => Ok(1.0),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LuceWeights::new(weights)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let design_bytes = read(&args.design)?;
    let file = DatasetFile::from_json(&utf8(&design_bytes, &args.design)?)?;
    let (universe, specs) = file.design(args.n)?;
    let menu = specs[0].menu.clone();
    let weights = parse_weights(&args.weights, &universe, menu.feasible())?;
    let rule = parse_rule(&args.rule)?;
    let params = if args.alpha == 0.0 {
        ModelParams::no_influence(weights.clone())
    } else {
        ModelParams::new(args.alpha, weights.clone())?
    };
    let data = simulate_dataset(&params, &specs, RngSeed(args.seed), rule)?;

    let mut out = DatasetFile::from_simulated(&universe, &data)?;
    let weight_map: BTreeMap<String, f64> = universe
        .labels()
        .iter()
        .map(|l| l.to_string())
        .zip(weights.as_slice().iter().copied())
        .collect();
    out.provenance = Some(json!({
        "generator": "awlm simulate",
        "alpha": args.alpha,
        "weights": weight_map,
        "seed": args.seed,
        "rule": rule,
        "design_digest": digest(&[&design_bytes]),
    }));
    let mut text = out.to_json();
    text.push('\n');
    write_text(args.output.as_deref(), &text)?;

    let mut report = Report::new("simulate", &[&design_bytes], args);
    report.results = json!({
        "feasible": labels(&universe, menu.feasible()),
        "regimes": data.regimes.iter().map(|r| json!({
            "n": r.counts.total(),
            "counts": r.counts.counts(),
            "shares": r.counts.shares(),
        })).collect::<Vec<_>>(),
        "dataset_digest": digest(&[text.as_bytes()]),
    });
    if let Some(path) = &args.report {
        report.write(Some(path))?;
    } else if args.output.is_some() {
        report.write(None)?;
    }
    Ok(exit::OK)
}

pub fn identify(args: &InputArgs) -> Result<u8, CliError> {
    let loaded = load(args)?;
    let obs = &loaded.obs;
    if obs.regimes.len() < 2 {
        return Err(CliError::validation("identify needs at least 2 regimes"));
    }
    let tol = tolerances(obs, args.tol);
    let mut report = Report::new(
        "identify",
        &loaded.input_slices(),
        Resolved {
            args,
            tolerances: tol,
        },
    );
    report.warnings.extend(loaded.warnings.iter().cloned());
    let s = obs.menu.feasible();
    let regimes = obs.pairs()?;

    let mut pairs = Vec::new();
    for i in 0..regimes.len() {
        for j in i + 1..regimes.len() {
            let pair = ExposurePair::new(
                regimes[i].0.clone(),
                regimes[i].1.clone(),
                regimes[j].0.clone(),
                regimes[j].1.clone(),
            )?;
            let (delta, a) = awlm::ident::delta_and_a(&pair);
            let mut entry = json!({ "i": i, "j": j, "delta": delta, "a": a });
            match recover_alpha_pair(&pair, tol.diff) {
                Ok(res) => {
                    entry["alpha"] = to_value(res.alpha);
                    entry["ratios"] = to_value(&res.ratios);
                    entry["degenerate"] = json!(res.degenerate);
                    entry["class"] = to_value(res.class);
                    entry["consistent"] = json!(true);
                }
                Err(e @ AwlmError::RatioInconsistency { .. }) => {
                    entry["degenerate"] = json!(false);
                    entry["consistent"] = json!(false);
                    entry["error"] = json!(e.to_string());
                }
                Err(e) => return Err(e.into()),
            }
            pairs.push(entry);
        }
    }

    let raw: Vec<_> = all_pairs(s, &regimes)
        .into_iter()
        .map(|(_, da)| da)
        .collect();
    let rationalizability = rationalizability_check(&regimes, tol.diff)?;
    let code = match ls_alpha(&raw) {
        Ok(alpha) => {
            let class = AlphaClass::of(alpha);
            let mut results = json!({
                "feasible": labels(&obs.universe, s),
                "alpha": alpha,
                "alpha_class": class,
                "pairs": pairs,
                "rationalizability": rationalizability,
            });
            if class == AlphaClass::Interior {
                let fit = ls_p0(alpha, &regimes)?;
                results["p0"] = to_value(labeled(&obs.universe, s, fit.p0.masses()));
                results["p0_projected"] = json!(fit.projected);
                if fit.projected {
                    report.warnings.push("p0 projected onto the simplex".into());
                }
            } else {
                report
                    .warnings
                    .push(format!("alpha = {alpha} lies outside (0, 1)"));
            }
            report.results = results;
            match rationalizability.verdict {
                Verdict::Violated => exit::FALSIFIED,
                Verdict::Underdetermined => exit::DEGENERATE,
                Verdict::Rationalizable => exit::OK,
            }
        }
        Err(AwlmError::Degenerate(msg)) => {
            report.results = json!({
                "feasible": labels(&obs.universe, s),
                "alpha": Value::Null,
                "verdict": "degenerate",
                "pairs": pairs,
                "rationalizability": rationalizability,
            });
            report
                .warnings
                .push(format!("no pair identifies alpha: {msg}"));
            exit::DEGENERATE
        }
        Err(e) => return Err(e.into()),
    };
    report.diagnostics = json!({ "regimes": regimes.len() });
    report.write(args.output.as_deref())?;
    Ok(code)
}

pub fn estimate(args: &EstimateArgs) -> Result<u8, CliError> {
    let loaded = load(&args.input)?;
    let obs = &loaded.obs;
    let mut report = Report::new("estimate", &loaded.input_slices(), args);
    report.warnings.extend(loaded.warnings.iter().cloned());
    let s = obs.menu.feasible();
    if obs.regimes.len() < 2 {
        return Err(CliError::validation("estimation needs at least 2 regimes"));
    }

    match args.kind {
        Kind::Ls => {
            let regimes = obs.pairs()?;
            let raw: Vec<_> = all_pairs(s, &regimes)
                .into_iter()
                .map(|(_, da)| da)
                .collect();
            let alpha = ls_alpha(&raw)?;
            let class = AlphaClass::of(alpha);
            let mut results = json!({
                "kind": "ls",
                "feasible": labels(&obs.universe, s),
                "alpha_hat": alpha,
                "alpha_class": class,
            });
            if class == AlphaClass::Interior {
                let fit = ls_p0(alpha, &regimes)?;
                results["p0_hat"] = to_value(labeled(&obs.universe, s, fit.p0.masses()));
                results["p0_projected"] = json!(fit.projected);
            } else {
                report
                    .warnings
                    .push(format!("alpha = {alpha} lies outside (0, 1)"));
            }
            report.results = results;
        }
        Kind::Md | Kind::Gmm2 => {
            if obs.regimes.iter().any(|r| r.n().is_none()) {
                report.warnings.push(
                    "no sample size for some regimes: nominal N_i = 1, so standard errors and J are not meaningful"
                        .into(),
                );
            }
            let data = obs.to_gmm(1)?;
            let spec = WeightSpec {
                kind: if args.kind == Kind::Md {
                    WeightKind::Identity
                } else {
                    WeightKind::Optimal
                },
                ridge: args.ridge,
            };
            let config = SearchConfig {
                jacobian: match args.jacobian {
                    JacobianArg::Empirical => JacobianPlugIn::Empirical,
                    JacobianArg::Model => JacobianPlugIn::Model,
                },
                ..SearchConfig::default()
            };
            let est = gmm::estimate(&data, &spec, &config)?;
            if est.flags.boundary_estimate {
                report.warnings.push(
                    "boundary estimate: the criterion is smallest at an end of the search interval"
                        .into(),
                );
            }
            if est.flags.ridge_engaged {
                report
                    .warnings
                    .push("ridge engaged on a near-singular covariance block".into());
            }
            if est.flags.p0_outside_simplex {
                report
                    .warnings
                    .push("p0 estimate has a negative coordinate".into());
            }
            let mut results = to_value(&est);
            results["kind"] = to_value(args.kind);
            results["feasible"] = to_value(labels(&obs.universe, s));
            results["p0_hat"] = to_value(labeled(&obs.universe, s, &est.p0_hat));
            results["se_p0"] = to_value(labeled(&obs.universe, s, &est.se_p0));
            report.diagnostics = json!({ "trace": results["trace"].take() });
            results
                .as_object_mut()
                .expect("estimate is an object")
                .remove("trace");
            report.results = results;
        }
    }
    report.write(args.input.output.as_deref())?;
    Ok(exit::OK)
}

struct AxiomRun {
    checks: Vec<CheckReport>,
    notes: Vec<String>,
    profile: Option<LeverageProfile>,
    leverage_tol: f64,
}

fn prefixed(mut r: CheckReport, prefix: &str) -> CheckReport {
    r.location = Some(match r.location {
        Some(loc) => format!("{prefix}, {loc}"),
        None => prefix.to_string(),
    });
    r
}

fn failed(check: &str, location: String) -> CheckReport {
    CheckReport {
        check: check.into(),
        passed: false,
        worst_violation: f64::NAN,
        location: Some(location),
    }
}

fn run_axioms(obs: &Observed, tol: &Tolerances) -> Result<AxiomRun, CliError> {
    let s = obs.menu.feasible();
    let regimes = obs.pairs()?;
    let restr: Vec<Vec<f64>> = regimes.iter().map(|(q, _)| q.restrict(s)).collect();
    let share: Vec<f64> = restr.iter().map(|v| v.iter().sum()).collect();
    let composition = |i: usize| -> Option<Vec<f64>> {
        (share[i] > 0.0).then(|| restr[i].iter().map(|v| v / share[i]).collect())
    };

    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut intra = Vec::new();
    let (mut proportional, mut radial) = (0, 0);
    for i in 0..regimes.len() {
        for j in i + 1..regimes.len() {
            let (a, b) = (&regimes[i], &regimes[j]);
            let here = format!("regimes ({i}, {j})");
            if sup_dist(&restr[i], &restr[j]) <= MATCH_TOL {
                intra.push((a.clone(), b.clone()));
                continue;
            }
            if (share[i] - share[j]).abs() <= MATCH_TOL {
                let r = check_proportional_response(&a.0, &a.1, &b.0, &b.1, tol.cross)?;
                checks.push(prefixed(r, &here));
                proportional += 1;
            }
            if let (Some(vi), Some(vj)) = (composition(i), composition(j)) {
                if sup_dist(&vi, &vj) <= MATCH_TOL {
                    let r = check_radial_consistency(&a.0, &a.1, &b.0, &b.1, tol.cross)?;
                    checks.push(prefixed(r, &here));
                    radial += 1;
                }
            }
        }
    }
    if intra.is_empty() {
        notes.push("no two regimes share a feasible restriction: intra-aspiration irrelevance not testable".into());
    } else {
        checks.push(check_intra_aspiration(&intra, tol.diff)?);
    }
    if proportional == 0 {
        notes.push("no pair with equal feasible share: proportional response not testable".into());
    }
    if radial == 0 {
        notes.push("no pair with a common composition: radial consistency not testable".into());
    }

    let mut fits: Vec<LevelFit> = Vec::new();
    let mut leverage_tol = 0.0f64;
    for (mu, members) in group_by_level(&obs.menu, &regimes) {
        if members.len() < 2 {
            continue;
        }
        let points = members.iter().map(|&k| regimes[k].clone()).collect();
        let slice = LevelSlice::new(obs.menu.clone(), points)?;
        let fit = match estimate_lambda(&slice) {
            Ok(fit) => fit,
            Err(AwlmError::DegenerateSlice) => {
                notes.push(format!(
                    "level mu = {mu}: all exposures agree on S, no multiplier"
                ));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut spread2 = 0.0;
        let mut min_step = f64::INFINITY;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let dq: Vec<f64> = restr[j].iter().zip(&restr[i]).map(|(a, b)| a - b).collect();
                let d2 = dot(&dq, &dq);
                spread2 += d2;
                if d2 > 0.0 {
                    min_step = min_step.min(d2.sqrt());
                }
            }
        }
        leverage_tol = leverage_tol.max(2.0 * tol.inverse_lambda(fit.lambda, spread2.sqrt()));
        if members.len() >= 3 {
            let level_tol = match tol.sigma_max {
                Some(_) => tol.diff * (1.0 + 1.0 / min_step),
                None => tol.diff,
            };
            checks.push(CheckReport {
                check: "level_collinearity".into(),
                passed: fit.residual <= level_tol,
                worst_violation: fit.residual,
                location: Some(format!("level mu = {mu}")),
            });
        }
        fits.push(fit);
    }
    let profile = if fits.len() >= 2 {
        let profile = LeverageProfile {
            menu: obs.menu.clone(),
            entries: fits,
        };
        match check_leverage_line(&profile, leverage_tol) {
            Ok((kappa, r)) => {
                notes.push(format!("kappa = {kappa}"));
                checks.push(r);
            }
            Err(AwlmError::KappaNonpositive(msg)) => checks.push(failed("leverage_line", msg)),
            Err(e) => return Err(e.into()),
        }
        Some(profile)
    } else {
        notes.push(
            "fewer than 2 feasible-share levels with 2+ regimes: leverage line not testable".into(),
        );
        None
    };
    notes.push("single-menu dataset: cross-menu Luce consistency needs several menus".into());
    Ok(AxiomRun {
        checks,
        notes,
        profile,
        leverage_tol,
    })
}

fn any_failed(checks: &[CheckReport]) -> bool {
    checks.iter().any(|c| !c.passed)
}

pub fn axioms(args: &InputArgs) -> Result<u8, CliError> {
    let loaded = load(args)?;
    let obs = &loaded.obs;
    let tol = tolerances(obs, args.tol);
    let mut report = Report::new(
        "axioms",
        &loaded.input_slices(),
        Resolved {
            args,
            tolerances: tol,
        },
    );
    report.warnings.extend(loaded.warnings.iter().cloned());
    let run = run_axioms(obs, &tol)?;
    let s = obs.menu.feasible();
    let mut results = json!({
        "feasible": labels(&obs.universe, s),
        "checks": run.checks,
        "passed": !any_failed(&run.checks),
    });
    if let Some(profile) = &run.profile {
        results["levels"] = to_value(&profile.entries);
        match recover_per_menu(profile, run.leverage_tol) {
            Ok(rec) => {
                results["recovery"] = json!({
                    "alpha": rec.alpha,
                    "kappa": rec.kappa,
                    "p0": labeled(&obs.universe, s, rec.p0.masses()),
                    "residual_report": rec.residual_report,
                });
            }
            Err(e) => report
                .warnings
                .push(format!("per-menu recovery unavailable: {e}")),
        }
    }
    report.diagnostics = json!({ "notes": run.notes });
    let code = if any_failed(&run.checks) {
        exit::FALSIFIED
    } else {
        exit::OK
    };
    report.results = results;
    report.write(args.output.as_deref())?;
    Ok(code)
}

pub fn falsify(args: &InputArgs) -> Result<u8, CliError> {
    let loaded = load(args)?;
    let obs = &loaded.obs;
    let tol = tolerances(obs, args.tol);
    let mut report = Report::new(
        "falsify",
        &loaded.input_slices(),
        Resolved {
            args,
            tolerances: tol,
        },
    );
    report.warnings.extend(loaded.warnings.iter().cloned());
    let run = run_axioms(obs, &tol)?;
    let mut falsified = any_failed(&run.checks);

    let mut results = json!({ "checks": run.checks });
    if obs.regimes.len() >= 2 {
        let regimes = obs.pairs()?;
        let rat = rationalizability_check(&regimes, tol.diff)?;
        match rat.verdict {
            Verdict::Violated => falsified = true,
            Verdict::Underdetermined => report
                .warnings
                .push("rationalizability underdetermined: no pair moves A".into()),
            Verdict::Rationalizable => {}
        }
        results["rationalizability"] = to_value(&rat);
    } else {
        report
            .warnings
            .push("one regime: rationalizability not testable".into());
    }

    let design = Design::new(
        obs.menu.clone(),
        obs.regimes
            .iter()
            .map(|r| r.exposure.clone())
            .collect::<Vec<Dist>>(),
    )?;
    let generic = design_genericity_check(&design)?;
    if !generic.applicable {
        report
            .warnings
            .push("genericity check inapplicable for fewer than 3 regimes".into());
    } else if !generic.generic {
        report.warnings.push(
            "design is not generic: exposure differences are collinear or rank deficient".into(),
        );
    }
    results["genericity"] = to_value(&generic);
    results["passed"] = json!(!falsified);
    report.results = results;
    report.diagnostics = json!({ "notes": run.notes });
    report.write(args.output.as_deref())?;
    Ok(if falsified { exit::FALSIFIED } else { exit::OK })
}
