use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ScenarioError, ScenarioSpec, SweepVariable};
use crate::rng::derive_run_seed;

pub const DEFAULT_SWEEP_CAP: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub path: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: u64,
    pub seed: u64,
    /// The sweep values that produced this run, in declaration order.
    pub assignments: Vec<Assignment>,
    /// Self-contained, sweepless scenario for this run; its seed is `seed`.
    pub spec: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub scenario: String,
    pub runs: Vec<RunManifest>,
}

/// Finds the JSON node a dotted path names. Array elements are addressed by
/// their `id` field or by index; `actors.<id>` reaches both the ego and the
/// world's actors. A missing final object key is created so that optional
/// fields can be swept.
pub fn resolve_path<'a>(root: &'a mut Value, path: &str, ego_id: &str) -> Result<&'a mut Value, String> {
    let mut segs: Vec<&str> = path.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(format!("malformed path `{path}`"));
    }
    if segs[0] == "actors" && segs.len() >= 2 {
        if segs[1] == ego_id {
            segs.splice(0..2, ["ego"]);
        } else {
            segs.insert(0, "world");
        }
    }
    let last = segs.len() - 1;
    let mut cur = root;
    for (i, seg) in segs.iter().enumerate() {
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*seg) {
                    if i != last {
                        return Err(format!("`{path}` does not resolve: no key `{seg}`"));
                    }
                    map.insert(seg.to_string(), Value::Null);
                }
                map.get_mut(*seg).expect("present")
            }
            Value::Array(items) => {
                let by_id = items
                    .iter()
                    .position(|v| v.get("id").and_then(Value::as_str) == Some(*seg));
                let idx = by_id
                    .or_else(|| seg.parse::<usize>().ok().filter(|&k| k < items.len()))
                    .ok_or_else(|| format!("`{path}` does not resolve: no element `{seg}`"))?;
                &mut items[idx]
            }
            _ => return Err(format!("`{path}` does not resolve: `{seg}` is inside a scalar")),
        };
    }
    Ok(cur)
}

fn apply(base: &Value, ego_id: &str, assignments: &[(&str, &Value)], seed: u64) -> Result<ScenarioSpec, String> {
    let mut v = base.clone();
    for (path, value) in assignments {
        *resolve_path(&mut v, path, ego_id)? = (*value).clone();
    }
    v["sweep"] = Value::Array(Vec::new());
    v["seed"] = Value::from(seed);
    let spec: ScenarioSpec =
        serde_path_to_error::deserialize(v).map_err(|e| format!("at `{}`: {}", e.path(), e.inner()))?;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Applies `path = value` edits to a scenario and revalidates it. Sweep
/// variables and the seed are left alone.
pub fn apply_overrides(spec: &ScenarioSpec, overrides: &[(String, Value)]) -> Result<ScenarioSpec, ScenarioError> {
    let mut v = serde_json::to_value(spec).expect("scenario serializes");
    for (path, value) in overrides {
        *resolve_path(&mut v, path, &spec.ego.id)
            .map_err(|m| ScenarioError::Invalid(crate::error::ValidationError::new(path.clone(), m)))? = value.clone();
    }
    let out: ScenarioSpec = serde_path_to_error::deserialize(v).map_err(|e| {
        ScenarioError::Invalid(crate::error::ValidationError::new(e.path().to_string(), e.inner().to_string()))
    })?;
    out.validate()?;
    Ok(out)
}

/// Every value of `var`, applied alone to `spec`, must yield a valid scenario.
pub(super) fn check_variable(spec: &ScenarioSpec, var: &SweepVariable) -> Result<(), String> {
    let base = serde_json::to_value(spec).expect("scenario serializes");
    for value in &var.values {
        apply(&base, &spec.ego.id, &[(&var.path, value)], spec.seed)
            .map_err(|e| format!("value {value} for `{}`: {e}", var.path))?;
    }
    Ok(())
}

/// Cartesian expansion in declaration order, the last variable varying fastest.
pub fn expand_sweep(spec: &ScenarioSpec, cap: u64) -> Result<SweepPlan, ScenarioError> {
    let count: u128 = spec.sweep.iter().map(|v| v.values.len() as u128).product();
    if count > cap as u128 {
        return Err(ScenarioError::SweepTooLarge { count, cap });
    }
    let base = serde_json::to_value(spec).expect("scenario serializes");
    let mut runs = Vec::with_capacity(count as usize);
    for run_id in 0..count as u64 {
        let mut rest = run_id;
        let mut picks = vec![0usize; spec.sweep.len()];
        for (k, var) in spec.sweep.iter().enumerate().rev() {
            let n = var.values.len() as u64;
            picks[k] = (rest % n) as usize;
            rest /= n;
        }
        let assignments: Vec<(&str, &Value)> = spec
            .sweep
            .iter()
            .zip(&picks)
            .map(|(var, &i)| (var.path.as_str(), &var.values[i]))
            .collect();
        let seed = if spec.sweep.is_empty() {
            spec.seed
        } else {
            derive_run_seed(spec.seed, run_id)
        };
        let run_spec = apply(&base, &spec.ego.id, &assignments, seed).map_err(|m| {
            ScenarioError::Invalid(crate::error::ValidationError::new(format!("sweep (run {run_id})"), m))
        })?;
        runs.push(RunManifest {
            run_id,
            seed,
            assignments: assignments
                .into_iter()
                .map(|(p, v)| Assignment {
                    path: p.to_string(),
                    value: v.clone(),
                })
                .collect(),
            spec: run_spec,
        });
    }
    Ok(SweepPlan {
        scenario: spec.name.clone(),
        runs,
    })
}
