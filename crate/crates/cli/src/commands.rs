//! The four commands. Each returns the rendered report and an exit code.

use crate::args::{Format, IdSelection, RunConfig};
use crate::instance::{block_dim, load_instance, non_p, Instance};
use crate::CliError;
use opkit_core::gamma_domain::RefutationWitness;
use opkit_core::gamma_fo::{
    classify_gamma_tuple, solve_fo_tuple, verify_gamma_identity, Evidence, FoError, GammaIdentity, GammaInstance,
    OperatorTuple, VerificationReport, WindowInfo,
};
use opkit_core::io::matrix_rows::to_rows;
use opkit_core::linalg::ComplexMatrix;
use opkit_core::model::{
    extract_multiplier_tuple, verify_model_identity, Family, ModelCheckOptions, ModelError, ModelIdentity,
};
use opkit_core::structured::{finite_astar, TruncationOrder};
use opkit_core::tetrablock::{
    classify_e_triple, solve_fo_pair, verify_tetra_identity, TetraError, TetraIdentity, TetraInstance,
};
use rayon::prelude::*;
use serde_json::{json, Value};

/// Refutation samples used by class tests.
pub const CHECK_SAMPLES: usize = 200;

/// Rendered command result.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub code: i32,
    pub text: String,
}

fn render(cfg: &RunConfig, value: &Value, text: String) -> String {
    match cfg.format {
        Format::Json => serde_json::to_string_pretty(value).expect("JSON value") + "\n",
        Format::Text => text,
    }
}

fn matrices(ms: &[ComplexMatrix]) -> Value {
    json!(ms.iter().map(to_rows).collect::<Vec<_>>())
}

fn witness_json(w: &RefutationWitness) -> Value {
    json!({
        "polynomial": w.polynomial,
        "operator_norm": w.operator_norm,
        "sup": w.sup,
        "sample": w.sample,
    })
}

fn witness_text(w: &RefutationWitness) -> String {
    let terms: Vec<String> = w
        .polynomial
        .terms
        .iter()
        .map(|t| format!("({:+.4}{:+.4}i)·x^{:?}", t.coeff.re, t.coeff.im, t.alpha))
        .collect();
    format!(
        "witness: f = {}\n  ||f(T)|| = {:.6}, sup |f| = {:.6} (sample {})\n",
        terms.join(" + "),
        w.operator_norm,
        w.sup,
        w.sample
    )
}

fn evidence_text(evidence: &[Evidence]) -> String {
    evidence
        .iter()
        .map(|e| {
            let side = if e.one_sided { " (one-sided)" } else { "" };
            format!("  {}: {:.3e}{side}\n", e.condition, e.residual)
        })
        .collect()
}

/// `check`: class verdict with per-condition residuals.
pub fn cmd_check(cfg: &RunConfig) -> Result<Output, CliError> {
    let inst = load_instance(cfg)?;
    let digest = inst.digest();
    let (label, evidence, witness) = if let Some(tuple) = inst.gamma_tuple() {
        let class = classify_gamma_tuple(tuple, &cfg.tol, CHECK_SAMPLES);
        let w = match &class.verdict {
            opkit_core::gamma_fo::GammaVerdict::Refuted(w) => Some(w.clone()),
            _ => None,
        };
        (class.verdict.label(), class.evidence, w)
    } else {
        let triple = inst.triple().expect("tetrablock instance");
        let class = classify_e_triple(&triple, &cfg.tol, CHECK_SAMPLES);
        let w = match &class.verdict {
            opkit_core::tetrablock::EVerdict::Refuted(w) => Some(w.clone()),
            _ => None,
        };
        (class.verdict.label(), class.evidence, w)
    };
    let value = json!({
        "family": inst.family(),
        "verdict": label,
        "evidence": evidence,
        "witness": witness.as_ref().map(witness_json),
        "instance_digest": digest,
    });
    let mut text = format!("{label}\n{}", evidence_text(&evidence));
    if let Some(w) = &witness {
        text += &witness_text(w);
    }
    text += &format!("instance {digest}\n");
    Ok(Output { code: 0, text: render(cfg, &value, text) })
}

fn pair_note(dim: usize) -> Option<&'static str> {
    (dim == 0).then_some("defect dimension 0")
}

/// `fo`: fundamental operators of the instance (exit 4 when the solve
/// residual exceeds the tolerance) and, when solvable, of its adjoint.
pub fn cmd_fo(cfg: &RunConfig) -> Result<Output, CliError> {
    let inst = load_instance(cfg)?;
    let digest = inst.digest();
    let (value, text) = if let Some(tuple) = inst.gamma_tuple() {
        let fo = solve_fo_tuple(tuple, &cfg.tol)?;
        let adj = solve_fo_tuple(&tuple.adjoint(), &cfg.tol);
        let mut text = format!("n = {}, defect dimension {}\nresidual {:.3e}\n", tuple.n, fo.defect_dim, fo.residual);
        for (i, a) in fo.ops.iter().enumerate() {
            text += &format!("A{} =\n{}", i + 1, matrix_text(a));
        }
        let adjoint = match &adj {
            Ok(b) => {
                text += &format!("adjoint defect dimension {}, residual {:.3e}\n", b.defect_dim, b.residual);
                for (i, m) in b.ops.iter().enumerate() {
                    text += &format!("B{} =\n{}", i + 1, matrix_text(m));
                }
                json!({"defect_dim": b.defect_dim, "B": matrices(&b.ops), "residual": b.residual, "note": pair_note(b.defect_dim)})
            }
            Err(e) => {
                text += &format!("adjoint tuple not solvable: {e}\n");
                json!({"error": e.to_string()})
            }
        };
        if let Some(note) = pair_note(fo.defect_dim) {
            text += &format!("note: {note}\n");
        }
        let value = json!({
            "family": "gamma",
            "n": tuple.n,
            "defect_dim": fo.defect_dim,
            "A": matrices(&fo.ops),
            "residual": fo.residual,
            "note": pair_note(fo.defect_dim),
            "adjoint": adjoint,
            "instance_digest": digest,
        });
        (value, text)
    } else {
        let triple = inst.triple().expect("tetrablock instance");
        let pair = solve_fo_pair(&triple, &cfg.tol)?;
        let adj = solve_fo_pair(&triple.adjoint(), &cfg.tol);
        let mut text = format!(
            "defect dimension {}\nresidual {:.3e}, solver gap {:.3e}\n[F1,F2] = 0: {}, [F1,F1*] = [F2,F2*]: {}\nF1 =\n{}F2 =\n{}",
            pair.defect_dim,
            pair.residual,
            pair.solver_gap,
            pair.commutation_flags.fo_commute,
            pair.commutation_flags.defect_balance,
            matrix_text(&pair.f1),
            matrix_text(&pair.f2)
        );
        let adjoint = match &adj {
            Ok(g) => {
                text += &format!(
                    "adjoint defect dimension {}, residual {:.3e}\nG1 =\n{}G2 =\n{}",
                    g.defect_dim,
                    g.residual,
                    matrix_text(&g.f1),
                    matrix_text(&g.f2)
                );
                json!({
                    "defect_dim": g.defect_dim,
                    "G1": to_rows(&g.f1),
                    "G2": to_rows(&g.f2),
                    "residual": g.residual,
                    "commutation_flags": g.commutation_flags,
                    "note": pair_note(g.defect_dim),
                })
            }
            Err(e) => {
                text += &format!("adjoint triple not solvable: {e}\n");
                json!({"error": e.to_string()})
            }
        };
        if let Some(note) = pair_note(pair.defect_dim) {
            text += &format!("note: {note}\n");
        }
        let value = json!({
            "family": "tetrablock",
            "defect_dim": pair.defect_dim,
            "F1": to_rows(&pair.f1),
            "F2": to_rows(&pair.f2),
            "residual": pair.residual,
            "solver_gap": pair.solver_gap,
            "commutation_flags": pair.commutation_flags,
            "note": pair_note(pair.defect_dim),
            "adjoint": adjoint,
            "instance_digest": digest,
        });
        (value, text)
    };
    Ok(Output { code: 0, text: render(cfg, &value, text + &format!("instance {digest}\n")) })
}

fn matrix_text(m: &ComplexMatrix) -> String {
    (0..m.nrows())
        .map(|i| {
            let row: Vec<String> =
                (0..m.ncols()).map(|j| format!("{:+.6}{:+.6}i", m[(i, j)].re, m[(i, j)].im)).collect();
            format!("  [{}]\n", row.join(", "))
        })
        .collect()
}

/// Result of one catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Report(VerificationReport),
    Skipped(String),
}

type Job<'a> = (&'static str, Box<dyn Fn() -> Outcome + Send + Sync + 'a>);

/// Report for an identity whose evaluation raised a numerical error.
fn failed(id: &str, tol: f64, digest: &str) -> Outcome {
    Outcome::Report(VerificationReport::new(
        id,
        f64::INFINITY,
        tol,
        WindowInfo { kind: "full".into(), ambient: 0, retained: 0 },
        digest.to_string(),
    ))
}

fn gamma_outcome(r: Result<VerificationReport, FoError>, id: &str, tol: f64, digest: &str) -> Outcome {
    match r {
        Ok(rep) => Outcome::Report(rep),
        Err(FoError::MissingInput(why)) => Outcome::Skipped(format!("missing input: {why}")),
        Err(_) => failed(id, tol, digest),
    }
}

fn model_outcome(r: Result<VerificationReport, ModelError>, id: &str, tol: f64, digest: &str) -> Outcome {
    match r {
        Ok(rep) => Outcome::Report(rep),
        Err(ModelError::MissingInput(why)) => Outcome::Skipped(format!("missing input: {why}")),
        Err(_) => failed(id, tol, digest),
    }
}

fn tetra_outcome(r: Result<VerificationReport, TetraError>, id: &str, tol: f64, digest: &str) -> Outcome {
    match r {
        Ok(rep) => Outcome::Report(rep),
        Err(TetraError::MissingInput(why)) => Outcome::Skipped(format!("missing input: {why}")),
        Err(_) => failed(id, tol, digest),
    }
}

/// Multiplier extraction on a bare Hardy-layout tuple.
fn raw_extract(
    id: &str,
    members: &[ComplexMatrix],
    mask: &[usize],
    trunc: Option<TruncationOrder>,
    family: Family,
    cfg: &RunConfig,
    opts: &ModelCheckOptions,
    digest: &str,
) -> Outcome {
    let Some(trunc) = trunc else {
        return Outcome::Skipped("needs a model instance or a Hardy-layout truncation (--truncation)".into());
    };
    let dim = members[0].nrows();
    let Some(d) = block_dim(dim, &trunc) else {
        return Outcome::Skipped(format!("dimension {dim} is not a multiple of N + 1 = {}", trunc.n + 1));
    };
    match extract_multiplier_tuple(members, d, &trunc, family, opts.samples, &cfg.tol) {
        Ok(r) => Outcome::Report(VerificationReport::new(
            id,
            r.worst(),
            cfg.tol.residual_tol,
            WindowInfo::of_mask(dim, mask),
            digest.to_string(),
        )),
        Err(_) => failed(id, cfg.tol.residual_tol, digest),
    }
}

/// Strong limit 𝒜_* for finite, unwindowed instances.
fn finite_limit(p: &ComplexMatrix, window: &Option<Vec<usize>>, cfg: &RunConfig) -> Option<ComplexMatrix> {
    if window.is_some() {
        return None;
    }
    finite_astar(p, &cfg.tol, 200).ok()
}

fn gamma_instance(tuple: &OperatorTuple, astar: Option<ComplexMatrix>, cfg: &RunConfig) -> Option<GammaInstance> {
    let inst = GammaInstance::prepare(tuple.clone(), &cfg.tol).ok()?;
    Some(match astar {
        Some(a) => inst.with_astar(a),
        None => inst,
    })
}

fn jobs<'a>(inst: &'a Instance, cfg: &'a RunConfig, opts: &'a ModelCheckOptions) -> Vec<Job<'a>> {
    let digest = inst.digest();
    let mut out: Vec<Job<'a>> = Vec::new();
    let skip = |why: &'static str| -> Box<dyn Fn() -> Outcome + Send + Sync + 'a> {
        Box::new(move || Outcome::Skipped(why.into()))
    };

    // Γₙ relation identities.
    let gamma = match inst {
        Instance::Gamma { tuple, .. } => {
            gamma_instance(tuple, finite_limit(tuple.p(), &tuple.window, cfg), cfg)
        }
        Instance::GammaModel(m) => gamma_instance(&m.tuple, Some(m.model.astar.clone()), cfg),
        _ => None,
    };
    let gamma = std::sync::Arc::new(gamma);
    for id in GammaIdentity::ALL {
        match (inst.family(), gamma.as_ref()) {
            ("gamma", Some(_)) => {
                let g = gamma.clone();
                let d = digest.clone();
                out.push((
                    id.id(),
                    Box::new(move || {
                        let g = g.as_ref().as_ref().expect("prepared instance");
                        gamma_outcome(verify_gamma_identity(id, g, &cfg.tol, 50), id.id(), cfg.tol.residual_tol, &d)
                    }),
                ));
            }
            ("gamma", None) => out.push((id.id(), skip("defect data unavailable for this tuple"))),
            _ => out.push((id.id(), skip("not a Gamma_n instance"))),
        }
    }

    // Model identities.
    for id in ModelIdentity::ALL {
        let d = digest.clone();
        match inst {
            Instance::GammaModel(m) => out.push((
                id.id(),
                Box::new(move || model_outcome(verify_model_identity(id, m, &cfg.tol, opts), id.id(), cfg.tol.residual_tol, &d)),
            )),
            Instance::Gamma { tuple, truncation } if id == ModelIdentity::Extract => {
                let mask = tuple.mask();
                out.push((
                    id.id(),
                    Box::new(move || {
                        raw_extract(id.id(), non_p(&tuple.members), &mask, *truncation, Family::Gamma, cfg, opts, &d)
                    }),
                ))
            }
            Instance::Gamma { .. } => out.push((id.id(), skip("needs a model instance (model generator)"))),
            _ => out.push((id.id(), skip("not a Gamma_n instance"))),
        }
    }

    // Tetrablock identities.
    let tetra = match inst {
        Instance::Tetra { triple, .. } => TetraInstance::prepare(triple.clone(), &cfg.tol).ok().map(|t| {
            match finite_limit(&triple.p, &triple.window, cfg) {
                Some(a) => t.with_astar(a),
                None => t,
            }
        }),
        Instance::TetraModel(m) => Some(TetraInstance::from_model((**m).clone())),
        _ => None,
    };
    let tetra = std::sync::Arc::new(tetra);
    for id in TetraIdentity::ALL {
        let d = digest.clone();
        match inst {
            Instance::Tetra { triple, truncation } if id == TetraIdentity::Extract => {
                let members = vec![triple.a.clone(), triple.b.clone()];
                let mask = triple.mask();
                out.push((
                    id.id(),
                    Box::new(move || {
                        raw_extract(id.id(), &members, &mask, *truncation, Family::Tetrablock, cfg, opts, &d)
                    }),
                ))
            }
            Instance::Tetra { .. } if matches!(id, TetraIdentity::Nec | TetraIdentity::Dil) => {
                out.push((id.id(), skip("needs a model instance (tetra/ model generator)")))
            }
            Instance::Tetra { .. } | Instance::TetraModel(_) => {
                if tetra.is_some() {
                    let t = tetra.clone();
                    out.push((
                        id.id(),
                        Box::new(move || {
                            let t = t.as_ref().as_ref().expect("prepared instance");
                            tetra_outcome(verify_tetra_identity(id, t, &cfg.tol, opts), id.id(), cfg.tol.residual_tol, &d)
                        }),
                    ))
                } else {
                    out.push((id.id(), skip("defect data unavailable for this triple")))
                }
            }
            _ => out.push((id.id(), skip("not a tetrablock instance"))),
        }
    }
    out
}

/// All identity ids in catalog order.
pub fn catalog() -> Vec<&'static str> {
    GammaIdentity::ALL
        .iter()
        .map(|i| i.id())
        .chain(ModelIdentity::ALL.iter().map(|i| i.id()))
        .chain(TetraIdentity::ALL.iter().map(|i| i.id()))
        .collect()
}

/// `verify`: runs the selected identities (concurrently, merged in catalog
/// order); exit 5 when any executed identity fails.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Output, CliError> {
    if let IdSelection::Ids(ids) = &cfg.ids {
        let known = catalog();
        if let Some(bad) = ids.iter().find(|i| !known.contains(&i.as_str())) {
            return Err(CliError::usage(format!("unknown identity {bad}")));
        }
    }
    let inst = load_instance(cfg)?;
    let opts = ModelCheckOptions { grid: cfg.grid, ..ModelCheckOptions::default() };
    let selected: Vec<Job> = jobs(&inst, cfg, &opts).into_iter().filter(|(id, _)| cfg.ids.includes(id)).collect();
    let digest = inst.digest();
    // Reports identify the instance as loaded, whatever view a module used.
    let outcomes: Vec<(&str, Outcome)> = selected
        .par_iter()
        .map(|(id, job)| {
            let outcome = match job() {
                Outcome::Report(mut r) => {
                    r.instance_digest = digest.clone();
                    Outcome::Report(r)
                }
                skipped => skipped,
            };
            (*id, outcome)
        })
        .collect();
    let reports: Vec<&VerificationReport> = outcomes
        .iter()
        .filter_map(|(_, o)| match o {
            Outcome::Report(r) => Some(r),
            Outcome::Skipped(_) => None,
        })
        .collect();
    let all_pass = reports.iter().all(|r| r.pass);
    let mut text = String::new();
    for (id, o) in &outcomes {
        match o {
            Outcome::Report(r) => {
                let verdict = if r.pass { "PASS" } else { "FAIL" };
                text += &format!(
                    "{verdict} {id}: residual {:.3e} (tol {:.1e}, {} window {}/{})\n",
                    r.residual, r.tolerance, r.window.kind, r.window.retained, r.window.ambient
                );
            }
            Outcome::Skipped(why) => text += &format!("SKIP {id}: {why}\n"),
        }
    }
    text += &format!("instance {digest}\n");
    let value = serde_json::to_value(&reports).expect("serializable reports");
    if cfg.format == Format::Json {
        for (id, o) in &outcomes {
            if let Outcome::Skipped(why) = o {
                eprintln!("skipped {id}: {why}");
            }
        }
    }
    Ok(Output { code: if all_pass { 0 } else { 5 }, text: render(cfg, &value, text) })
}

/// `generate`: the instance as JSON (always JSON, whatever --format says).
pub fn cmd_generate(cfg: &RunConfig) -> Result<Output, CliError> {
    if !matches!(cfg.source, crate::args::Source::Generator { .. }) {
        return Err(CliError::usage("generate needs --generator and --seed".into()));
    }
    let inst = load_instance(cfg)?;
    let text = serde_json::to_string_pretty(&inst.to_json()).expect("JSON value") + "\n";
    Ok(Output { code: 0, text })
}
