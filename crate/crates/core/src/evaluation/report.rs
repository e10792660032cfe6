use serde_json::{Map, Value};

use super::dcor::distance_correlation;
use super::representations::{extract_representations, flatten_modality};
use crate::data::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::model::UmurlModel;

/// dCor between each raw modality input and the fused representation, plus the spread.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionReport {
    pub per_modality: Vec<(Modality, f64)>,
    pub gap: f64,
}

impl ContributionReport {
    pub fn from_values(per_modality: Vec<(Modality, f64)>) -> Result<Self> {
        if per_modality.is_empty() {
            return Err(Error::contract("contribution report needs at least one modality"));
        }
        let max = per_modality.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let min = per_modality.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        Ok(ContributionReport { per_modality, gap: max - min })
    }

    /// Scores precomputed representations against the raw inputs of `data`.
    pub fn measure(data: &Dataset, representations: &Tensor<f64>, modalities: &[Modality]) -> Result<Self> {
        let per = modalities
            .iter()
            .map(|&m| Ok((m, distance_correlation(&flatten_modality(data, m)?, representations)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(per)
    }

    pub fn get(&self, m: Modality) -> Option<f64> {
        self.per_modality.iter().find(|p| p.0 == m).map(|p| p.1)
    }
}

pub fn modality_contribution(model: &UmurlModel<f32>, data: &Dataset, modalities: &[Modality]) -> Result<ContributionReport> {
    let reps = extract_representations(data, model, modalities)?;
    ContributionReport::measure(data, &reps.values, &reps.modalities)
}

/// Collected metrics for the CSV and JSON summaries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvaluationReport {
    /// Modality set the top-1 score was measured with.
    pub top1: Option<(Vec<Modality>, f64)>,
    pub contribution: Option<ContributionReport>,
}

fn set_name(ms: &[Modality]) -> String {
    ms.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
}

impl EvaluationReport {
    /// `metric,modality,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,modality,value\n");
        if let Some((ms, v)) = &self.top1 {
            out.push_str(&format!("top1,{},{v:.6}\n", set_name(ms)));
        }
        if let Some(c) = &self.contribution {
            for (m, v) in &c.per_modality {
                out.push_str(&format!("dcor,{m},{v:.6}\n"));
            }
            out.push_str(&format!("dcor_gap,{},{:.6}\n", set_name(&c.per_modality.iter().map(|p| p.0).collect::<Vec<_>>()), c.gap));
        }
        out
    }

    /// Flat object with keys `top1`, `dcor.<modality>` and `dcor.gap`.
    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        if let Some((_, v)) = &self.top1 {
            map.insert("top1".into(), Value::from(*v));
        }
        if let Some(c) = &self.contribution {
            for (m, v) in &c.per_modality {
                map.insert(format!("dcor.{m}"), Value::from(*v));
            }
            map.insert("dcor.gap".into(), Value::from(c.gap));
        }
        serde_json::to_string_pretty(&Value::Object(map)).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_and_formats() {
        let c = ContributionReport::from_values(vec![(Modality::Joint, 0.8), (Modality::Motion, 0.3), (Modality::Bone, 0.5)]).unwrap();
        assert!((c.gap - 0.5).abs() < 1e-15);
        let r = EvaluationReport {
            top1: Some((Modality::ALL.to_vec(), 0.75)),
            contribution: Some(c),
        };
        let csv = r.to_csv();
        assert_eq!(csv.lines().next(), Some("metric,modality,value"));
        assert!(csv.contains("top1,joint+motion+bone,0.750000"));
        assert!(csv.contains("dcor,motion,0.300000"));
        let json: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["top1"], 0.75);
        assert_eq!(json["dcor.joint"], 0.8);
        assert_eq!(json["dcor.gap"], 0.5);
    }
}
