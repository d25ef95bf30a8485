//! Model assembly: the trainable parameter store, seeded initialization, and
//! the end-to-end forward pass from windows to (scaled) forecasts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::graph_repr::{tgcn_unroll, TgcnParams};
use crate::hg_infer::{
    edge_probabilities, gumbel_sample, pairwise_similarity, EdgeProbabilities, GumbelNoise,
    HgEmbeddings, IncidenceMode, IncidenceSample,
};
use crate::hg_repr::{
    fuse_hgat_hgt, hgat_edge_agg, hgat_input_gate, hgat_node_agg, hgt_forward, HgatDropout,
    HgatHead, HgatParams, HgtParams,
};
use crate::numeric::{NumericError, Result, Tape, Tensor, TensorId};
use crate::projection::{gln_forward, ProjectionParams};
use crate::temporal::{forecast_head, moe_fuse, uncertainty_head, FusionParams, HeadParams};

/// Dropout rate on HgAT attention weights during training.
pub const ATTN_DROPOUT: f64 = 0.1;

/// Structural hyperparameters fixing every parameter shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelDims {
    pub n: usize,
    pub tau: usize,
    pub upsilon: usize,
    pub d: usize,
    pub m: usize,
    pub hgat_heads: usize,
    pub hgt_heads: usize,
    /// Appends the observation mask as an extra input channel (projection and
    /// T-GCN) when missingness is enabled.
    pub mask_channel: bool,
    pub enable_spatial: bool,
    pub enable_explicit: bool,
    pub enable_implicit: bool,
    pub enable_temporal: bool,
    pub uncertainty: bool,
    pub gamma: f64,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("tau", self.tau),
            ("upsilon", self.upsilon),
            ("d", self.d),
            ("m", self.m),
            ("hgat_heads", self.hgat_heads),
            ("hgt_heads", self.hgt_heads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NumericError::Domain {
                    op: "model_dims",
                    reason: format!("{name} must be positive"),
                });
            }
        }
        if self.d % self.hgt_heads != 0 {
            return Err(NumericError::Domain {
                op: "model_dims",
                reason: format!("d = {} not divisible by hgt_heads = {}", self.d, self.hgt_heads),
            });
        }
        if self.gamma <= 0.0 {
            return Err(NumericError::Domain {
                op: "model_dims",
                reason: "gamma must be positive".into(),
            });
        }
        if self.enable_spatial && !self.enable_explicit && !self.enable_implicit {
            return Err(NumericError::Domain {
                op: "model_dims",
                reason: "spatial inference enabled but both experts disabled".into(),
            });
        }
        Ok(())
    }

    pub fn has_hypergraph(&self) -> bool {
        self.enable_spatial && self.enable_implicit
    }

    pub fn has_graph(&self) -> bool {
        self.enable_spatial && self.enable_explicit
    }

    fn proj_in(&self) -> usize {
        if self.mask_channel {
            2 * self.tau
        } else {
            self.tau
        }
    }

    fn tgcn_in(&self) -> usize {
        if self.mask_channel {
            2
        } else {
            1
        }
    }

    fn head_out(&self) -> usize {
        if self.uncertainty {
            2 * self.upsilon
        } else {
            self.upsilon
        }
    }
}

/// One named parameter with its Adam moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// All trainable parameters in a fixed registration order (the optimizer and
/// the checkpoint both rely on that order).
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ParamStore {
    pub entries: Vec<ParamEntry>,
    pub step: u64,
}

impl ParamStore {
    fn push(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            m: Tensor::zeros(shape.clone()),
            v: Tensor::zeros(shape),
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.value)
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }
}

/// Model state: dims, parameters with moments, the fixed normalized
/// adjacency (when the explicit-graph expert is on), and the sparsity weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub dims: ModelDims,
    pub params: ParamStore,
    pub a_hat: Option<Tensor>,
    pub lambda_sparsity: f64,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], values).expect("init shape")
}

fn scaled_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    // Box-Muller keeps this independent of distribution crates' sampling order
    let mut values = Vec::with_capacity(rows * cols);
    while values.len() < rows * cols {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        values.push(r * theta.cos() * scale);
        if values.len() < rows * cols {
            values.push(r * theta.sin() * scale);
        }
    }
    Tensor::new(vec![rows, cols], values).expect("init shape")
}

impl ModelState {
    /// Build a freshly initialized model. `a_hat` must be provided iff the
    /// explicit-graph expert is enabled.
    pub fn init(
        dims: ModelDims,
        a_hat: Option<Tensor>,
        lambda_sparsity: f64,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if dims.has_graph() != a_hat.is_some() {
            return Err(NumericError::Domain {
                op: "model_init",
                reason: "normalized adjacency must be supplied exactly when the graph expert is enabled"
                    .into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.d;
        let mut params = ParamStore::default();

        params.push("proj.w0", xavier(&mut rng, dims.proj_in(), d));
        params.push("proj.w1", xavier(&mut rng, dims.proj_in(), d));
        params.push("proj.w2", xavier(&mut rng, d, d));

        if dims.has_hypergraph() {
            let scale = 1.0 / (d as f64).sqrt();
            params.push("hg.emb_nodes", scaled_normal(&mut rng, dims.n, d, scale));
            params.push("hg.emb_edges", scaled_normal(&mut rng, dims.m, d, scale));
            for z in 0..dims.hgat_heads {
                params.push(&format!("hgat.h{z}.w0"), xavier(&mut rng, d, d));
                params.push(&format!("hgat.h{z}.w1"), xavier(&mut rng, d, d));
                params.push(&format!("hgat.h{z}.w2"), xavier(&mut rng, d, d));
                params.push(&format!("hgat.h{z}.attn"), xavier(&mut rng, d, 1));
                params.push(&format!("hgat.h{z}.w3"), xavier(&mut rng, 2 * d, 1));
            }
            params.push("hgat.gate_s", xavier(&mut rng, d, d));
            params.push("hgat.gate_g", xavier(&mut rng, d, d));
            for name in ["hgt.w_q", "hgt.w_k", "hgt.w_v", "hgt.w_o"] {
                params.push(name, xavier(&mut rng, d, d));
            }
            params.push("hgt.mlp_w1", xavier(&mut rng, d, 4 * d));
            params.push("hgt.mlp_b1", Tensor::zeros(vec![1, 4 * d]));
            params.push("hgt.mlp_w2", xavier(&mut rng, 4 * d, d));
            params.push("hgt.mlp_b2", Tensor::zeros(vec![1, d]));
            params.push("hgt.ln1_gain", Tensor::full(vec![1, d], 1.0));
            params.push("hgt.ln1_bias", Tensor::zeros(vec![1, d]));
            params.push("hgt.ln2_gain", Tensor::full(vec![1, d], 1.0));
            params.push("hgt.ln2_bias", Tensor::zeros(vec![1, d]));
            params.push("fuse.s", xavier(&mut rng, d, d));
            params.push("fuse.g", xavier(&mut rng, d, d));
        }

        if dims.has_graph() {
            params.push("tgcn.w_gcn", xavier(&mut rng, dims.tgcn_in(), d));
            params.push("tgcn.w_u", xavier(&mut rng, 2 * d, d));
            params.push("tgcn.w_r", xavier(&mut rng, 2 * d, d));
            params.push("tgcn.w_c", xavier(&mut rng, 2 * d, d));
            params.push("tgcn.b_u", Tensor::zeros(vec![1, d]));
            params.push("tgcn.b_r", Tensor::zeros(vec![1, d]));
            params.push("tgcn.b_c", Tensor::zeros(vec![1, d]));
        }

        if dims.has_hypergraph() && dims.has_graph() {
            params.push("moe.s", xavier(&mut rng, d, d));
            params.push("moe.g", xavier(&mut rng, d, d));
        }

        if dims.enable_temporal {
            params.push("head.hidden_w", xavier(&mut rng, d, d));
            params.push("head.hidden_b", Tensor::zeros(vec![1, d]));
        }
        params.push("head.out_w", xavier(&mut rng, d, dims.head_out()));
        params.push("head.out_b", Tensor::zeros(vec![1, dims.head_out()]));

        Ok(Self {
            dims,
            params,
            a_hat,
            lambda_sparsity,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Register every parameter on a fresh tape. Ids in the returned bundle
    /// align with `params.entries` order.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut ids = Vec::with_capacity(self.params.entries.len());
        for entry in &self.params.entries {
            ids.push(tape.param(entry.value.clone()));
        }
        let id = |name: &str| -> TensorId {
            let idx = self
                .params
                .entries
                .iter()
                .position(|e| e.name == name)
                .unwrap_or_else(|| panic!("parameter {name} not registered"));
            ids[idx]
        };

        let proj = ProjectionParams {
            w0: id("proj.w0"),
            w1: id("proj.w1"),
            w2: id("proj.w2"),
        };
        let (emb, hgat, hgt, fuse) = if self.dims.has_hypergraph() {
            let heads = (0..self.dims.hgat_heads)
                .map(|z| HgatHead {
                    w0: id(&format!("hgat.h{z}.w0")),
                    w1: id(&format!("hgat.h{z}.w1")),
                    w2: id(&format!("hgat.h{z}.w2")),
                    attn: id(&format!("hgat.h{z}.attn")),
                    w3: id(&format!("hgat.h{z}.w3")),
                })
                .collect();
            (
                Some(HgEmbeddings {
                    nodes: id("hg.emb_nodes"),
                    edges: id("hg.emb_edges"),
                }),
                Some(HgatParams {
                    heads,
                    gate_s: id("hgat.gate_s"),
                    gate_g: id("hgat.gate_g"),
                }),
                Some(HgtParams {
                    w_q: id("hgt.w_q"),
                    w_k: id("hgt.w_k"),
                    w_v: id("hgt.w_v"),
                    w_o: id("hgt.w_o"),
                    mlp_w1: id("hgt.mlp_w1"),
                    mlp_b1: id("hgt.mlp_b1"),
                    mlp_w2: id("hgt.mlp_w2"),
                    mlp_b2: id("hgt.mlp_b2"),
                    ln1_gain: id("hgt.ln1_gain"),
                    ln1_bias: id("hgt.ln1_bias"),
                    ln2_gain: id("hgt.ln2_gain"),
                    ln2_bias: id("hgt.ln2_bias"),
                    num_heads: self.dims.hgt_heads,
                }),
                Some((id("fuse.s"), id("fuse.g"))),
            )
        } else {
            (None, None, None, None)
        };
        let tgcn = if self.dims.has_graph() {
            Some(TgcnParams {
                w_gcn: id("tgcn.w_gcn"),
                w_u: id("tgcn.w_u"),
                w_r: id("tgcn.w_r"),
                w_c: id("tgcn.w_c"),
                b_u: id("tgcn.b_u"),
                b_r: id("tgcn.b_r"),
                b_c: id("tgcn.b_c"),
            })
        } else {
            None
        };
        let moe = if self.dims.has_hypergraph() && self.dims.has_graph() {
            Some(FusionParams {
                gate_s: id("moe.s"),
                gate_g: id("moe.g"),
            })
        } else {
            None
        };
        let head = HeadParams {
            hidden_w: self.dims.enable_temporal.then(|| id("head.hidden_w")),
            hidden_b: self.dims.enable_temporal.then(|| id("head.hidden_b")),
            out_w: id("head.out_w"),
            out_b: id("head.out_b"),
        };
        let a_hat = self
            .a_hat
            .as_ref()
            .map(|a| tape.leaf(a.clone()));

        BoundModel {
            ids,
            proj,
            emb,
            hgat,
            hgt,
            fuse,
            tgcn,
            moe,
            head,
            a_hat,
        }
    }

    /// Forward a batch of windows on one tape. The incidence is sampled once
    /// per batch; HgAT attention dropout draws a fresh mask per window when
    /// `dropout_seed` is given (training only).
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        windows: &[&Window],
        mode: IncidenceMode,
        noise_seed: u64,
        dropout_seed: Option<u64>,
    ) -> Result<BatchForward> {
        let dims = &self.dims;
        let (probs, incidence) = if dims.has_hypergraph() {
            let emb = bound.emb.as_ref().expect("hypergraph bound");
            let s = pairwise_similarity(tape, emb)?;
            let p = edge_probabilities(tape, s)?;
            let noise = if mode == IncidenceMode::EvalHard {
                None
            } else {
                Some(GumbelNoise::sample(dims.n, dims.m, noise_seed))
            };
            let sample = gumbel_sample(tape, &p, dims.gamma, noise.as_ref(), mode)?;
            (Some(p), Some(sample))
        } else {
            (None, None)
        };

        let mut predictions = Vec::with_capacity(windows.len());
        let mut sigma2 = Vec::with_capacity(windows.len());
        for (w_idx, window) in windows.iter().enumerate() {
            let history = tape.leaf(window.history.clone());
            let mask = if dims.mask_channel {
                Some(tape.leaf(window.history_mask.clone()))
            } else {
                None
            };
            let proj_in = match mask {
                Some(m) => tape.concat(&[history, m], 1)?,
                None => history,
            };
            let x_bar = gln_forward(tape, proj_in, &bound.proj)?;

            let features = if !dims.enable_spatial {
                x_bar
            } else {
                let hg_stream = if dims.has_hypergraph() {
                    let sample = incidence.as_ref().expect("incidence sampled");
                    let hgat = bound.hgat.as_ref().expect("hgat bound");
                    let dropout = dropout_seed.map(|seed| {
                        HgatDropout::sample(
                            dims.n,
                            dims.m,
                            ATTN_DROPOUT,
                            derive_seed(seed, "hgat-dropout", w_idx as u64),
                        )
                    });
                    let edges =
                        hgat_edge_agg(tape, x_bar, sample.incidence, hgat, dropout.as_ref())?;
                    let nodes = hgat_node_agg(
                        tape,
                        x_bar,
                        edges.reps,
                        sample.incidence,
                        hgat,
                        dropout.as_ref(),
                    )?;
                    let gated = hgat_input_gate(tape, nodes.reps, x_bar, hgat)?;
                    let hgt_out =
                        hgt_forward(tape, x_bar, bound.hgt.as_ref().expect("hgt bound"))?;
                    let (fs, fg) = bound.fuse.expect("fusion gate bound");
                    Some(fuse_hgat_hgt(tape, hgt_out, gated, fs, fg)?)
                } else {
                    None
                };
                let graph_stream = if dims.has_graph() {
                    let a_hat = bound.a_hat.expect("adjacency bound");
                    let tgcn = bound.tgcn.as_ref().expect("tgcn bound");
                    Some(tgcn_unroll(tape, a_hat, history, mask, tgcn)?)
                } else {
                    None
                };
                moe_fuse(tape, hg_stream, graph_stream, bound.moe.as_ref())?
            };

            if dims.uncertainty {
                let (mu, s2) = uncertainty_head(tape, features, &bound.head)?;
                predictions.push(mu);
                sigma2.push(s2);
            } else {
                predictions.push(forecast_head(tape, features, &bound.head)?);
            }
        }

        Ok(BatchForward {
            predictions,
            sigma2: if dims.uncertainty { Some(sigma2) } else { None },
            probs,
            incidence,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    pub ids: Vec<TensorId>,
    pub proj: ProjectionParams,
    pub emb: Option<HgEmbeddings>,
    pub hgat: Option<HgatParams>,
    pub hgt: Option<HgtParams>,
    pub fuse: Option<(TensorId, TensorId)>,
    pub tgcn: Option<TgcnParams>,
    pub moe: Option<FusionParams>,
    pub head: HeadParams,
    pub a_hat: Option<TensorId>,
}

#[derive(Debug)]
pub struct BatchForward {
    /// Scaled point forecasts (μ in uncertainty mode), one n×υ tensor per
    /// window.
    pub predictions: Vec<TensorId>,
    pub sigma2: Option<Vec<TensorId>>,
    pub probs: Option<EdgeProbabilities>,
    pub incidence: Option<IncidenceSample>,
}

/// Stable seed derivation for independent random streams (FNV-1a).
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    let mut eat = |byte: u8| {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for b in master.to_le_bytes() {
        eat(b);
    }
    for b in tag.bytes() {
        eat(b);
    }
    for b in index.to_le_bytes() {
        eat(b);
    }
    hash
}
