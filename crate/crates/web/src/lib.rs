//! Browser playground: build a complementarity graph from a small generated
//! purchase log, inspect it as a heatmap, query it, and plot the co-purchase
//! distance weightings.
//!
//! The plain Rust API returns JSON strings so it can be tested natively; the
//! `wasm` module wraps it for JavaScript.

use copgraph::directionality::{AggregationFunction, AggregationKind};
use copgraph::synthetic::{generate, SyntheticConfig};
use copgraph::{build_model, ComplementarityModel, InteractionLog, ModelParams};
use serde_json::json;

pub struct Playground {
    log: InteractionLog,
    model: ComplementarityModel,
    /// Display order: anchors, then complements, then noise, each by pattern number.
    order: Vec<u32>,
}

fn display_key(id: &str) -> (u8, u32, String) {
    let kind = match id.as_bytes().first() {
        Some(b'a') => 0,
        Some(b'c') => 1,
        _ => 2,
    };
    let number = id[1..].split('_').next().and_then(|n| n.parse().ok()).unwrap_or(u32::MAX);
    (kind, number, id.to_string())
}

impl Playground {
    pub fn new(seed: u64) -> Result<Self, String> {
        let config = SyntheticConfig {
            n_users: 120,
            n_patterns: 8,
            n_noise_items: 8,
            n_categories: 4,
            patterns_per_user: 2,
            noise_per_user: 2,
            tie_rate: 0.0,
            embedding_dim: 4,
            seed,
        };
        let log = generate(&config).map_err(|e| e.to_string())?.log;
        let model = build_model(&log, &ModelParams::default()).map_err(|e| e.to_string())?;
        let mut order: Vec<u32> = (0..log.n_items() as u32).collect();
        order.sort_by_key(|&i| display_key(log.item_id(i)));
        Ok(Playground { log, model, order })
    }

    /// Rebuilds with new (α, λ, κ) and returns the graph as JSON:
    /// `{items, weights: [[row...]...], max, edges}` in display order.
    pub fn rebuild(&mut self, alpha: f64, lambda: u32, kappa: u32) -> Result<String, String> {
        let params = ModelParams::default().with_triplet(alpha, lambda, kappa);
        self.model = build_model(&self.log, &params).map_err(|e| e.to_string())?;
        Ok(self.graph_json())
    }

    pub fn graph_json(&self) -> String {
        let w = self.model.weights();
        let weights: Vec<Vec<f64>> = self
            .order
            .iter()
            .map(|&i| {
                self.order
                    .iter()
                    .map(|&j| if i == j { 0.0 } else { w.get(i as usize, j as usize) })
                    .collect()
            })
            .collect();
        let max = weights.iter().flatten().copied().fold(0.0, f64::max);
        let items: Vec<&str> = self.order.iter().map(|&i| self.model.item_id(i)).collect();
        json!({
            "items": items,
            "weights": weights,
            "max": max,
            "edges": w.nnz(),
            "params": self.model.params().to_string(),
        })
        .to_string()
    }

    /// Top-`k` complements of `item` as `[{item, score}]`.
    pub fn recommend(&self, item: &str, k: usize) -> Result<String, String> {
        let recs = self.model.recommend(item, k).map_err(|e| e.to_string())?;
        let rows: Vec<_> = recs.iter().map(|r| json!({ "item": r.item, "score": r.score })).collect();
        Ok(serde_json::Value::from(rows).to_string())
    }
}

/// Weight of each distance 1..=max_delta under the named weighting, as
/// `{kind, points: [[delta, weight]...]}`; distances past `kappa` weigh 0.
pub fn aggregation_curve(kind: &str, scale: f64, kappa: u32, max_delta: u32) -> Result<String, String> {
    let kind: AggregationKind = kind.parse().map_err(|e: copgraph::Error| e.to_string())?;
    let f = AggregationFunction::new(kind, scale).map_err(|e| e.to_string())?;
    let points: Vec<(u32, f64)> = (1..=max_delta)
        .map(|d| (d, if d <= kappa { f.weight(d as u64, kappa as u64) } else { 0.0 }))
        .collect();
    Ok(json!({ "kind": kind.short_name(), "points": points }).to_string())
}

pub fn aggregation_kinds() -> Vec<&'static str> {
    AggregationKind::ALL.iter().map(|k| k.short_name()).collect()
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub struct Demo(super::Playground);

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(seed: u32) -> Result<Demo, JsError> {
            super::Playground::new(seed as u64).map(Demo).map_err(|e| JsError::new(&e))
        }

        pub fn rebuild(&mut self, alpha: f64, lambda: u32, kappa: u32) -> Result<String, JsError> {
            self.0.rebuild(alpha, lambda, kappa).map_err(|e| JsError::new(&e))
        }

        pub fn recommend(&self, item: &str, k: usize) -> Result<String, JsError> {
            self.0.recommend(item, k).map_err(|e| JsError::new(&e))
        }
    }

    #[wasm_bindgen(js_name = aggregationCurve)]
    pub fn aggregation_curve(kind: &str, scale: f64, kappa: u32, max_delta: u32) -> Result<String, JsError> {
        super::aggregation_curve(kind, scale, kappa, max_delta).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = aggregationKinds)]
    pub fn aggregation_kinds() -> Vec<String> {
        super::aggregation_kinds().into_iter().map(String::from).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn rebuild_reports_square_heatmap() {
        let mut p = Playground::new(1).unwrap();
        let g: Value = serde_json::from_str(&p.rebuild(0.0, 1, 2).unwrap()).unwrap();
        let n = g["items"].as_array().unwrap().len();
        let rows = g["weights"].as_array().unwrap();
        assert_eq!(rows.len(), n);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == n));
        assert!(g["max"].as_f64().unwrap() > 0.0);
        assert_eq!(g["items"][0], "a0_0");
        assert!(g["params"].as_str().unwrap().contains("lambda=1"));
    }

    #[test]
    fn anchors_lead_to_their_complement() {
        let mut p = Playground::new(1).unwrap();
        p.rebuild(0.0, 1, 2).unwrap();
        let recs: Value = serde_json::from_str(&p.recommend("a2_0", 3).unwrap()).unwrap();
        assert_eq!(recs[0]["item"], "c2");
        assert!(p.recommend("nope", 3).unwrap_err().contains("unknown item"));
        assert!(p.rebuild(2.0, 1, 1).is_err());
    }

    #[test]
    fn curves() {
        let c: Value = serde_json::from_str(&aggregation_curve("inv", 1.0, 3, 5).unwrap()).unwrap();
        let pts: Vec<f64> = c["points"].as_array().unwrap().iter().map(|p| p[1].as_f64().unwrap()).collect();
        assert_eq!(pts, [1.0, 0.5, 1.0 / 3.0, 0.0, 0.0]);
        assert!(aggregation_curve("cubic", 1.0, 3, 5).is_err());
        assert_eq!(aggregation_kinds().len(), 7);
    }
}
