use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{SimMstConfig, TdlKind};
use super::layers::{self, Affine, CclBlock, Norm, SpectralFilter, TdlBlock, TemporalMixer, TwoLayer};
use super::params::{BoundParams, ParamId, ParamSet};
use super::relation;
use super::ModelError;
use crate::data::{ForecastBatch, DAYS_PER_WEEK, SLOTS_PER_DAY};
use crate::numerics::{fft, gradient_check, GradCheckReport, NumericsError, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct AffineIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct TwoLayerIds {
    hidden: AffineIds,
    output: AffineIds,
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
enum MixerIds {
    Mlp(TwoLayerIds),
    Seasonal {
        weight_re: ParamId,
        weight_im: ParamId,
        bias_re: ParamId,
        bias_im: ParamId,
    },
}

#[derive(Clone, Debug)]
struct LayerIds {
    tdl: Option<(MixerIds, NormIds)>,
    ccl: Option<(TwoLayerIds, NormIds)>,
}

#[derive(Clone, Debug)]
struct ModeIds {
    init: AffineIds,
    embedding: Option<ParamId>,
    /// Indexed by layer `1..=L` stored at `0..L`.
    layers: Vec<LayerIds>,
    head: TwoLayerIds,
}

#[derive(Clone, Copy, Debug)]
struct ProjectionIds {
    to_in: TwoLayerIds,
    to_out: TwoLayerIds,
}

#[derive(Clone, Debug)]
struct CsrlIds {
    /// One entry when shared, else one per mode.
    projections: Vec<ProjectionIds>,
    /// `[target][source]`
    pair_weights: Vec<Vec<ParamId>>,
}

#[derive(Clone, Debug)]
struct ModelIds {
    modes: Vec<ModeIds>,
    csrl: Option<CsrlIds>,
    time_of_day: ParamId,
    day_of_week: ParamId,
}

/// The forecasting network and its parameters.
#[derive(Clone, Debug)]
pub struct SimMst {
    config: SimMstConfig,
    params: ParamSet,
    ids: ModelIds,
}

/// Outputs of one forward pass on a tape.
#[derive(Debug)]
pub struct ForwardPass {
    /// Per mode, `[B, N, H, C]` in scaled units.
    pub predictions: Vec<Var>,
    /// Normalized relation matrices `[target][source]`, empty without CSRL.
    pub relations: Vec<Vec<Var>>,
}

struct Init<'a> {
    params: &'a mut ParamSet,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-bound..bound));
        self.params.insert(name, t)
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        self.params.insert(name, Tensor::full(shape.to_vec(), value))
    }

    fn affine(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> AffineIds {
        AffineIds {
            weight: self.uniform(format!("{prefix}.weight"), &[fan_in, fan_out], fan_in),
            bias: self.constant(format!("{prefix}.bias"), &[fan_out], 0.0),
        }
    }

    fn two_layer(&mut self, prefix: &str, input: usize, hidden: usize, output: usize) -> TwoLayerIds {
        TwoLayerIds {
            hidden: self.affine(&format!("{prefix}.0"), input, hidden),
            output: self.affine(&format!("{prefix}.1"), hidden, output),
        }
    }

    fn norm(&mut self, prefix: &str, width: usize) -> NormIds {
        NormIds {
            gamma: self.constant(format!("{prefix}.gamma"), &[width], 1.0),
            beta: self.constant(format!("{prefix}.beta"), &[width], 0.0),
        }
    }
}

impl SimMst {
    /// Builds the network with freshly initialized parameters: weights and
    /// embeddings uniform in `±1/sqrt(fan_in)`, biases and pair weights zero,
    /// layer-norm affines at identity.
    pub fn new(config: SimMstConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let ids = {
            let mut init = Init {
                params: &mut params,
                rng: ChaCha8Rng::seed_from_u64(config.init_seed),
            };
            build_ids(&config, &mut init)
        };
        Ok(Self { config, params, ids })
    }

    /// Rebuilds a network around existing parameter values.
    pub fn from_params(config: SimMstConfig, params: ParamSet) -> Result<Self, ModelError> {
        let fresh = Self::new(config.clone())?;
        if fresh.params.len() != params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        let mut ordered = fresh.params.clone();
        for (name, expected) in fresh.params.iter() {
            let t = params
                .by_name(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")))?;
            if t.shape() != expected.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    expected.shape()
                )));
            }
            *ordered.by_name_mut(name).expect("present") = t.clone();
        }
        Ok(Self {
            config,
            params: ordered,
            ids: fresh.ids,
        })
    }

    pub fn config(&self) -> &SimMstConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamSet) {
        assert_eq!(params.len(), self.params.len(), "parameter layout changed");
        self.params = params;
    }

    /// Exact number of learnable scalars.
    pub fn count_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Runs the full network on `tape`. Relation matrices are built once and
    /// shared by every layer; each layer mixes time, then modes, then channels.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        batch: &ForecastBatch,
    ) -> Result<ForwardPass, ModelError> {
        let cfg = &self.config;
        let shape = batch.history.shape();
        let expected = [
            shape.first().copied().unwrap_or(0),
            cfg.num_modes,
            cfg.num_nodes,
            cfg.history_len,
            cfg.channels,
        ];
        if shape != expected || shape[0] == 0 {
            return Err(ModelError::Shape(format!(
                "history has shape {shape:?}, expected [B, {}, {}, {}, {}]",
                cfg.num_modes, cfg.num_nodes, cfg.history_len, cfg.channels
            )));
        }
        let b = shape[0];
        if batch.tod_index.len() != b || batch.dow_index.len() != b {
            return Err(ModelError::Contract(format!(
                "batch of {b} samples carries {} time-of-day and {} day-of-week indices",
                batch.tod_index.len(),
                batch.dow_index.len()
            )));
        }

        let relations = match &self.ids.csrl {
            Some(csrl) => self.relation_vars(tape, bound, csrl)?,
            None => Vec::new(),
        };

        let lengths = cfg.lengths();
        let mut states: Vec<Vec<Var>> = Vec::with_capacity(cfg.num_modes);
        for (m, mode) in self.ids.modes.iter().enumerate() {
            let x = tape.constant(mode_slice(&batch.history, m));
            let init = affine(bound, mode.init);
            states.push(vec![layers::init_hidden(tape, x, &init)?]);
        }

        for l in 0..cfg.num_layers {
            let t_out = lengths[l + 1];
            let mut temporal = Vec::with_capacity(cfg.num_modes);
            for (m, mode) in self.ids.modes.iter().enumerate() {
                let block = mode.layers[l].tdl.map(|(mixer, norm)| tdl_block(bound, mixer, norm));
                let prev = *states[m].last().expect("initial state");
                temporal.push(layers::tdl_forward(tape, prev, block.as_ref(), t_out)?);
            }
            let mixed: Vec<Var> = match &self.ids.csrl {
                Some(csrl) => {
                    let mut out = Vec::with_capacity(cfg.num_modes);
                    for (i, row) in relations.iter().enumerate() {
                        let mut impacts = Vec::with_capacity(cfg.num_modes);
                        let mut weights = Vec::with_capacity(cfg.num_modes);
                        for (j, &t_j) in temporal.iter().enumerate() {
                            impacts.push(relation::cross_mode_propagate(tape, row[j], t_j)?);
                            weights.push(bound.var(csrl.pair_weights[i][j]));
                        }
                        out.push(relation::aggregate_mode_impacts(tape, &impacts, &weights, i)?);
                    }
                    out
                }
                None => temporal,
            };
            for (m, mode) in self.ids.modes.iter().enumerate() {
                let block = mode.layers[l].ccl.map(|(mlp, norm)| CclBlock {
                    mlp: two_layer(bound, mlp),
                    norm: norm_vars(bound, norm),
                });
                let h = layers::ccl_forward(tape, mixed[m], block.as_ref())?;
                states[m].push(h);
            }
        }

        let semantics = layers::time_semantics(
            tape,
            bound.var(self.ids.time_of_day),
            bound.var(self.ids.day_of_week),
            &batch.tod_index,
            &batch.dow_index,
        )?;
        let mut predictions = Vec::with_capacity(cfg.num_modes);
        for (m, mode) in self.ids.modes.iter().enumerate() {
            let head = two_layer(bound, mode.head);
            predictions.push(layers::readout(
                tape,
                &states[m],
                semantics,
                &head,
                cfg.horizon,
                cfg.channels,
            )?);
        }
        Ok(ForwardPass { predictions, relations })
    }

    fn relation_vars(&self, tape: &mut Tape, bound: &BoundParams, csrl: &CsrlIds) -> Result<Vec<Vec<Var>>, ModelError> {
        let m = self.config.num_modes;
        let mut in_out = Vec::with_capacity(m);
        for (mode, ids) in self.ids.modes.iter().enumerate() {
            let proj = csrl.projections[if csrl.projections.len() == 1 { 0 } else { mode }];
            let e = bound.var(ids.embedding.expect("csrl embeddings"));
            let e_in = two_layer_tanh(tape, bound, proj.to_in, e)?;
            let e_out = two_layer_tanh(tape, bound, proj.to_out, e)?;
            in_out.push((e_in, e_out));
        }
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let raw = relation::learn_relation_matrix(tape, in_out[i].0, in_out[i].1, in_out[j].0, in_out[j].1)?;
                let sparse = relation::sparsify_rows(tape, raw, self.config.topk)?;
                row.push(relation::normalize_relation_matrix(tape, sparse)?);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// Current normalized relation matrices `[target][source]`, empty
    /// without CSRL.
    pub fn relation_matrices(&self) -> Result<Vec<Vec<Tensor>>, ModelError> {
        let Some(csrl) = &self.ids.csrl else {
            return Ok(Vec::new());
        };
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let vars = self.relation_vars(&mut tape, &bound, csrl)?;
        Ok(vars
            .iter()
            .map(|row| row.iter().map(|&v| tape.value(v).clone()).collect())
            .collect())
    }

    /// Gradient-free prediction, `[B, M, N, H, C]` in scaled units.
    pub fn predict(&self, batch: &ForecastBatch) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let pass = self.forward(&mut tape, &bound, batch)?;
        Ok(stack_modes(&tape, &pass.predictions))
    }

    /// Finite-difference check of every parameter against a smooth probe
    /// loss (a fixed pseudo-random weighting of all predictions).
    pub fn gradient_check(
        &self,
        batch: &ForecastBatch,
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport, ModelError> {
        let leaves: Vec<(String, Tensor)> = self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let out_shape = [
            batch.len(),
            self.config.num_nodes,
            self.config.horizon,
            self.config.channels,
        ];
        let probes: Vec<Tensor> = (0..self.config.num_modes)
            .map(|_| Tensor::from_fn(out_shape.to_vec(), |_| rng.random_range(-1.0..1.0)))
            .collect();
        // The closure must report numerics errors; model errors are mapped
        // onto the closest numerics variant.
        let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var, NumericsError> {
            let bound = BoundParams::from_vars(vars.to_vec());
            let pass = self.forward(tape, &bound, batch).map_err(|e| match e {
                ModelError::Numerics(n) => n,
                _ => NumericsError::InvalidShape {
                    op: "forward",
                    shape: batch.history.shape().to_vec(),
                    reason: "model rejected the batch",
                },
            })?;
            let mut total: Option<Var> = None;
            for (&pred, probe) in pass.predictions.iter().zip(&probes) {
                let w = tape.constant(probe.clone());
                let weighted = tape.mul(pred, w)?;
                let s = tape.sum(weighted);
                total = Some(match total {
                    None => s,
                    Some(acc) => tape.add(acc, s)?,
                });
            }
            Ok(total.expect("at least one mode"))
        };
        // Validate up front so shape errors surface with their real message.
        self.predict(batch)?;
        Ok(gradient_check(f, &leaves, step, tolerance)?)
    }

    /// Canonical names of the in/out projection parameters, for inspection.
    pub fn projection_param_names(&self) -> Vec<(String, String)> {
        let Some(csrl) = &self.ids.csrl else {
            return Vec::new();
        };
        let mut pairs = Vec::new();
        for p in &csrl.projections {
            for (a, b) in [
                (p.to_in.hidden.weight, p.to_out.hidden.weight),
                (p.to_in.hidden.bias, p.to_out.hidden.bias),
                (p.to_in.output.weight, p.to_out.output.weight),
                (p.to_in.output.bias, p.to_out.output.bias),
            ] {
                pairs.push((self.params.name(a).to_string(), self.params.name(b).to_string()));
            }
        }
        pairs
    }
}

fn build_ids(cfg: &SimMstConfig, init: &mut Init<'_>) -> ModelIds {
    let (d, d_emb) = (cfg.hidden_dim, cfg.embed_dim);
    let lengths = cfg.lengths();
    let mut modes: Vec<ModeIds> = (0..cfg.num_modes)
        .map(|m| ModeIds {
            init: init.affine(&format!("mode{m}.init"), cfg.channels, d),
            embedding: cfg
                .enable_csrl
                .then(|| init.uniform(format!("mode{m}.embedding"), &[cfg.num_nodes, d_emb], d_emb)),
            layers: Vec::new(),
            head: TwoLayerIds {
                hidden: AffineIds {
                    weight: ParamId(usize::MAX),
                    bias: ParamId(usize::MAX),
                },
                output: AffineIds {
                    weight: ParamId(usize::MAX),
                    bias: ParamId(usize::MAX),
                },
            },
        })
        .collect();

    let csrl = cfg.enable_csrl.then(|| {
        let count = if cfg.share_projections { 1 } else { cfg.num_modes };
        let projections = (0..count)
            .map(|p| {
                let prefix = if cfg.share_projections {
                    "projection".to_string()
                } else {
                    format!("mode{p}.projection")
                };
                ProjectionIds {
                    to_in: init.two_layer(&format!("{prefix}.in"), d_emb, d_emb, d_emb),
                    to_out: init.two_layer(&format!("{prefix}.out"), d_emb, d_emb, d_emb),
                }
            })
            .collect();
        let pair_weights = (0..cfg.num_modes)
            .map(|i| {
                (0..cfg.num_modes)
                    .map(|j| init.constant(format!("csrl.pair_weight.{i}.{j}"), &[1], 0.0))
                    .collect()
            })
            .collect();
        CsrlIds {
            projections,
            pair_weights,
        }
    });

    for l in 1..=cfg.num_layers {
        let (t_in, t_out) = (lengths[l - 1], lengths[l]);
        for (m, mode) in modes.iter_mut().enumerate() {
            let prefix = format!("layer{l}.mode{m}");
            let tdl = cfg.enable_tdl.then(|| {
                let mixer = match cfg.tdl_kind {
                    TdlKind::Mlp => MixerIds::Mlp(init.two_layer(&format!("{prefix}.tdl"), t_in, t_in, t_out)),
                    TdlKind::Seasonal => {
                        let bins = fft::half_spectrum_len(t_in);
                        MixerIds::Seasonal {
                            weight_re: init.uniform(format!("{prefix}.tdl.filter.re"), &[bins], 1),
                            weight_im: init.uniform(format!("{prefix}.tdl.filter.im"), &[bins], 1),
                            bias_re: init.constant(format!("{prefix}.tdl.bias.re"), &[bins], 0.0),
                            bias_im: init.constant(format!("{prefix}.tdl.bias.im"), &[bins], 0.0),
                        }
                    }
                };
                (mixer, init.norm(&format!("{prefix}.tdl.norm"), d))
            });
            let ccl = cfg.enable_ccl.then(|| {
                (
                    init.two_layer(&format!("{prefix}.ccl"), d, d, d),
                    init.norm(&format!("{prefix}.ccl.norm"), d),
                )
            });
            mode.layers.push(LayerIds { tdl, ccl });
        }
    }

    let time_of_day = init.uniform("readout.time_of_day".into(), &[SLOTS_PER_DAY, d], d);
    let day_of_week = init.uniform("readout.day_of_week".into(), &[DAYS_PER_WEEK, d], d);
    for (m, mode) in modes.iter_mut().enumerate() {
        mode.head = init.two_layer(&format!("mode{m}.out"), 2 * d, d, cfg.horizon * cfg.channels);
    }
    ModelIds {
        modes,
        csrl,
        time_of_day,
        day_of_week,
    }
}

fn affine(bound: &BoundParams, ids: AffineIds) -> Affine {
    Affine {
        weight: bound.var(ids.weight),
        bias: bound.var(ids.bias),
    }
}

fn two_layer(bound: &BoundParams, ids: TwoLayerIds) -> TwoLayer {
    TwoLayer {
        hidden: affine(bound, ids.hidden),
        output: affine(bound, ids.output),
    }
}

fn norm_vars(bound: &BoundParams, ids: NormIds) -> Norm {
    Norm {
        gamma: bound.var(ids.gamma),
        beta: bound.var(ids.beta),
    }
}

fn tdl_block(bound: &BoundParams, mixer: MixerIds, norm: NormIds) -> TdlBlock {
    let mixer = match mixer {
        MixerIds::Mlp(ids) => TemporalMixer::Mlp(two_layer(bound, ids)),
        MixerIds::Seasonal {
            weight_re,
            weight_im,
            bias_re,
            bias_im,
        } => TemporalMixer::Seasonal(SpectralFilter {
            weight_re: bound.var(weight_re),
            weight_im: bound.var(weight_im),
            bias_re: bound.var(bias_re),
            bias_im: bound.var(bias_im),
        }),
    };
    TdlBlock {
        mixer,
        norm: norm_vars(bound, norm),
    }
}

/// Single-hidden-layer perceptron with Tanh, used for the in/out projections.
fn two_layer_tanh(tape: &mut Tape, bound: &BoundParams, ids: TwoLayerIds, x: Var) -> Result<Var, ModelError> {
    let h = affine(bound, ids.hidden).apply(tape, x)?;
    let h = tape.tanh(h);
    Ok(affine(bound, ids.output).apply(tape, h)?)
}

/// `[B, M, ...] -> [B, ...]` for one mode.
pub(crate) fn mode_slice(t: &Tensor, mode: usize) -> Tensor {
    let shape = t.shape();
    let (b, m) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let mut data = Vec::with_capacity(b * inner);
    for bi in 0..b {
        let start = (bi * m + mode) * inner;
        data.extend_from_slice(&t.data()[start..start + inner]);
    }
    let mut out_shape = vec![b];
    out_shape.extend_from_slice(&shape[2..]);
    Tensor::new(out_shape, data).expect("slice shape")
}

/// Stacks per-mode `[B, ...]` values into `[B, M, ...]`.
pub fn stack_modes(tape: &Tape, per_mode: &[Var]) -> Tensor {
    let first = tape.value(per_mode[0]);
    let b = first.shape()[0];
    let inner = first.numel() / b;
    let mut data = Vec::with_capacity(first.numel() * per_mode.len());
    for bi in 0..b {
        for &v in per_mode {
            data.extend_from_slice(&tape.value(v).data()[bi * inner..(bi + 1) * inner]);
        }
    }
    let mut shape = vec![b, per_mode.len()];
    shape.extend_from_slice(&first.shape()[1..]);
    Tensor::new(shape, data).expect("stack shape")
}
