//! Instance sources: JSON files and seeded generators.

use crate::args::{RunConfig, Source};
use crate::CliError;
use opkit_core::gamma_fo::{make_gamma_instance, GenParams, OperatorTuple, GAMMA_GENERATORS};
use opkit_core::linalg::ComplexMatrix;
use opkit_core::model::{make_model_instance, DilationInstance, ModelConfig, MODEL_GENERATORS};
use opkit_core::structured::TruncationOrder;
use opkit_core::tetrablock::{make_tetra_instance, make_tetra_model_instance, ETriple, TETRA_GENERATORS};
use serde_json::Value;

/// Prefix selecting the tetrablock generator namespace.
pub const TETRA_PREFIX: &str = "tetra/";

/// Tetrablock generators that build a model instance rather than a bare
/// triple.
pub const TETRA_MODEL_GENERATORS: [&str; 3] = ["backshift-astar", "compression-model", "direct-sum-model"];

/// A loaded or generated instance.
#[derive(Debug, Clone)]
pub enum Instance {
    /// Γₙ tuple; `truncation` is known for Hardy-layout instances.
    Gamma { tuple: OperatorTuple, truncation: Option<TruncationOrder> },
    /// Γₙ model instance over a structured P.
    GammaModel(Box<DilationInstance>),
    /// Tetrablock triple; `truncation` as for [`Instance::Gamma`].
    Tetra { triple: ETriple, truncation: Option<TruncationOrder> },
    /// Tetrablock model instance over a structured P.
    TetraModel(Box<DilationInstance>),
}

impl Instance {
    pub fn family(&self) -> &'static str {
        match self {
            Instance::Gamma { .. } | Instance::GammaModel(_) => "gamma",
            Instance::Tetra { .. } | Instance::TetraModel(_) => "tetrablock",
        }
    }

    pub fn digest(&self) -> String {
        match self {
            Instance::Gamma { tuple, .. } => tuple.digest(),
            Instance::GammaModel(m) | Instance::TetraModel(m) => m.digest(),
            Instance::Tetra { triple, .. } => triple.digest(),
        }
    }

    /// The Γₙ tuple view (model instances expose their materialized tuple).
    pub fn gamma_tuple(&self) -> Option<&OperatorTuple> {
        match self {
            Instance::Gamma { tuple, .. } => Some(tuple),
            Instance::GammaModel(m) => Some(&m.tuple),
            _ => None,
        }
    }

    /// The tetrablock triple view.
    pub fn triple(&self) -> Option<ETriple> {
        match self {
            Instance::Tetra { triple, .. } => Some(triple.clone()),
            Instance::TetraModel(m) => Some(triple_of_model(m)),
            _ => None,
        }
    }

    /// JSON text of the instance.
    pub fn to_json(&self) -> Value {
        match self {
            Instance::Gamma { tuple, .. } => serde_json::to_value(tuple).expect("serializable tuple"),
            Instance::Tetra { triple, .. } => serde_json::to_value(triple).expect("serializable triple"),
            Instance::GammaModel(m) | Instance::TetraModel(m) => {
                serde_json::from_str(&m.to_json()).expect("model instance JSON")
            }
        }
    }
}

/// (A, B, P) of a tetrablock model instance, with its pairs and window.
pub fn triple_of_model(m: &DilationInstance) -> ETriple {
    let t = &m.tuple;
    let mut triple = ETriple::new(t.members[0].clone(), t.members[1].clone(), t.members[2].clone())
        .expect("square members");
    triple.window = t.window.clone();
    if let (Some(f), Some(g)) = (&t.a, &t.b) {
        triple = triple.with_pairs(&[f[0].clone(), f[1].clone()], &[g[0].clone(), g[1].clone()]);
    }
    triple
}

fn model_config(cfg: &RunConfig) -> ModelConfig {
    ModelConfig { fft_grid: cfg.grid, ..ModelConfig::default() }
}

/// Hardy-layout truncation of a bare tuple: block dimension dim/(N+1) on
/// modes 0..=N with one edge mode excluded.
fn hardy_truncation(n: usize) -> Result<TruncationOrder, CliError> {
    TruncationOrder::new(n, 1).map_err(|e| CliError::usage(e.to_string()))
}

fn generate(id: &str, params: &GenParams, seed: u64, cfg: &RunConfig) -> Result<Instance, CliError> {
    let model_cfg = model_config(cfg);
    if let Some(tid) = id.strip_prefix(TETRA_PREFIX) {
        if TETRA_MODEL_GENERATORS.contains(&tid) {
            let m = make_tetra_model_instance(tid, params, seed, &model_cfg, &cfg.tol)?;
            return Ok(Instance::TetraModel(Box::new(m)));
        }
        if TETRA_GENERATORS.contains(&tid) {
            return Ok(Instance::Tetra { triple: make_tetra_instance(tid, params, seed)?, truncation: None });
        }
        return Err(CliError::usage(format!("unknown tetrablock generator {tid}")));
    }
    let mut params = params.clone();
    if params.n == 0 {
        params.n = 2;
    }
    if MODEL_GENERATORS.contains(&id) {
        let m = make_model_instance(id, &params, seed, &model_cfg, &cfg.tol)?;
        return Ok(Instance::GammaModel(Box::new(m)));
    }
    if GAMMA_GENERATORS.contains(&id) {
        let tuple = make_gamma_instance(id, &params, seed)?;
        let truncation = if id == "binomial-isometry" {
            // The generator materializes modes 0..=N with N = max(truncation, 4).
            Some(hardy_truncation(params.truncation.max(4))?)
        } else {
            None
        };
        return Ok(Instance::Gamma { tuple, truncation });
    }
    Err(CliError::usage(format!(
        "unknown generator {id}; known: {}, {}, and {} with the {TETRA_PREFIX} prefix",
        GAMMA_GENERATORS.join(", "),
        MODEL_GENERATORS.join(", "),
        TETRA_GENERATORS.iter().chain(TETRA_MODEL_GENERATORS[1..].iter()).copied().collect::<Vec<_>>().join(", ")
    )))
}

fn parse_error(e: serde_json::Error) -> CliError {
    CliError::parse(format!("malformed instance JSON: {e}"))
}

/// Decodes an instance document: model-instance JSON (key "tuple"), Γₙ
/// tuple JSON (key "members") or tetrablock triple JSON (keys "A", "B", "P").
pub fn parse_instance(text: &str, truncation_flag: Option<usize>) -> Result<Instance, CliError> {
    let value: Value = serde_json::from_str(text).map_err(parse_error)?;
    let obj = value.as_object().ok_or_else(|| CliError::parse("instance JSON must be an object".into()))?;
    let flag_trunc = truncation_flag.map(hardy_truncation).transpose()?;
    if let Some(tuple_value) = obj.get("tuple") {
        // Serialized model instance: the structured operator is not part of
        // the document, so it is reloaded as a bare tuple with its window,
        // precomputed fundamental operators and truncation.
        let tuple: OperatorTuple = serde_json::from_value(tuple_value.clone()).map_err(parse_error)?;
        let tuple = tuple.validated()?;
        let truncation = match obj.get("truncation").and_then(Value::as_array) {
            Some(t) if t.len() == 2 => {
                let n = t[0].as_u64().unwrap_or(0) as usize;
                let margin = t[1].as_u64().unwrap_or(0) as usize;
                Some(TruncationOrder::new(n, margin).map_err(|e| CliError::parse(e.to_string()))?)
            }
            _ => None,
        }
        .or(flag_trunc);
        if obj.get("family").and_then(Value::as_str) == Some("Tetrablock") {
            if tuple.n != 3 {
                return Err(CliError::dimension(format!("tetrablock instance with {} members", tuple.n)));
            }
            let m = &tuple.members;
            let mut triple = ETriple::new(m[0].clone(), m[1].clone(), m[2].clone())?;
            triple.window = tuple.window.clone();
            if let (Some(f), Some(g)) = (&tuple.a, &tuple.b) {
                if f.len() == 2 && g.len() == 2 {
                    triple = triple.with_pairs(&[f[0].clone(), f[1].clone()], &[g[0].clone(), g[1].clone()]);
                }
            }
            return Ok(Instance::Tetra { triple, truncation });
        }
        return Ok(Instance::Gamma { tuple, truncation });
    }
    if obj.contains_key("members") {
        let tuple: OperatorTuple = serde_json::from_value(value).map_err(parse_error)?;
        return Ok(Instance::Gamma { tuple: tuple.validated()?, truncation: flag_trunc });
    }
    if obj.contains_key("P") {
        let triple: ETriple = serde_json::from_value(value).map_err(parse_error)?;
        return Ok(Instance::Tetra { triple: triple.validated()?, truncation: flag_trunc });
    }
    Err(CliError::parse("unrecognized instance: expected \"members\", \"tuple\" or \"A\"/\"B\"/\"P\"".into()))
}

/// Loads or generates the configured instance.
pub fn load_instance(cfg: &RunConfig) -> Result<Instance, CliError> {
    match &cfg.source {
        Source::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
            parse_instance(&text, cfg.truncation)
        }
        Source::Generator { id, params, seed } => generate(id, params, *seed, cfg),
    }
}

/// Block dimension of a Hardy-layout member at truncation N.
pub fn block_dim(dim: usize, trunc: &TruncationOrder) -> Option<usize> {
    let modes = trunc.n + 1;
    (dim % modes == 0 && dim >= modes).then_some(dim / modes)
}

/// Leading members of a tuple (all but P).
pub fn non_p(members: &[ComplexMatrix]) -> &[ComplexMatrix] {
    &members[..members.len() - 1]
}
