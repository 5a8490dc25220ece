//! Context-aware visual policy: single, context, composition and output
//! sub-policies chained into one visual decision `v_t` per step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, hard_argmax, AttentionWeights, PolicyState, Recurrent, SubPolicy};
use crate::substrate::{Graph, LstmWeights, ParamId, ParamStore, SubstrateError, Var};
use crate::{Error, Result, Scalar};

/// Region features of one image plus their mean `r̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureSet<T> {
    regions: Vec<Vec<T>>,
    mean: Vec<T>,
}

impl<T: Scalar> RegionFeatureSet<T> {
    pub fn new(regions: Vec<Vec<T>>) -> Result<Self> {
        let first = regions.first().ok_or(Error::EmptyActionSpace)?;
        let dim = first.len();
        if dim == 0 {
            return Err(SubstrateError::Empty("region feature").into());
        }
        if let Some(bad) = regions.iter().find(|r| r.len() != dim) {
            return Err(SubstrateError::DimensionMismatch {
                op: "region features",
                left: vec![dim],
                right: vec![bad.len()],
            }
            .into());
        }
        let k = T::of(regions.len() as f64);
        let mut mean = vec![T::zero(); dim];
        for r in &regions {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= k);
        Ok(Self { regions, mean })
    }

    pub fn k(&self) -> usize {
        self.regions.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn regions(&self) -> &[Vec<T>] {
        &self.regions
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Places the regions and their mean on a graph as constant inputs.
    pub fn to_graph(&self, g: &mut Graph<'_, T>) -> RegionInputs {
        RegionInputs {
            regions: self.regions.iter().map(|r| g.input(r.clone())).collect(),
            mean: g.input(self.mean.clone()),
        }
    }
}

/// Region features as graph nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionInputs {
    pub regions: Vec<Var>,
    pub mean: Var,
}

/// History `{v_1 .. v_{t-1}}` of visual outputs within one decode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisualContextBuffer {
    history: Vec<Var>,
}

impl VisualContextBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: Var) {
        self.history.push(v);
    }

    pub fn items(&self) -> &[Var] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Attend over every previous visual output.
    #[default]
    FullHistory,
    /// Use only the previous step's output as context.
    LastStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CavpVariant {
    /// All four sub-policies.
    #[default]
    Full,
    /// Single sub-policy only (`v_t = v_t^s`); the context-free ablation.
    SingleOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavpConfig {
    #[serde(default)]
    pub context_mode: ContextMode,
    pub share_lstm: bool,
    pub hidden_size: usize,
    pub attn_size: usize,
    pub embed_size: usize,
    #[serde(default)]
    pub variant: CavpVariant,
}

impl CavpConfig {
    /// Small dimensions used by tests and the synthetic dataset.
    pub fn desk() -> Self {
        Self {
            context_mode: ContextMode::FullHistory,
            share_lstm: true,
            hidden_size: 32,
            attn_size: 32,
            embed_size: 16,
            variant: CavpVariant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.attn_size == 0 || self.embed_size == 0 {
            return Err(Error::Config("CAVP sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sub-policy LSTM state: single, context, composition, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CavpRecurrent {
    pub slots: [Recurrent; 4],
}

impl CavpRecurrent {
    pub fn zeros<T: Scalar>(g: &mut Graph<'_, T>, hidden: usize) -> Self {
        let r = Recurrent::zeros(g, hidden);
        Self { slots: [r; 4] }
    }
}

/// Everything one CAVP step produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CavpOutput {
    pub v: Var,
    /// Hidden state of the single sub-policy LSTM (`h_t^s`).
    pub single_hidden: Var,
    pub single: Var,
    pub context: Option<Var>,
    pub composition: Option<Var>,
    pub output: Option<Var>,
    pub recurrent: CavpRecurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Branches {
    context: SubPolicy,
    composition: SubPolicy,
    output: SubPolicy,
    w_c: ParamId,
}

/// Parameters of one context-aware visual policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Cavp {
    config: CavpConfig,
    region_dim: usize,
    single: SubPolicy,
    branches: Option<Branches>,
}

impl Cavp {
    /// Registers all parameters under `prefix`. The state fed to the
    /// sub-policy LSTMs has width `hidden + region_dim + embed`.
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: CavpConfig,
        region_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (h, a, d) = (config.hidden_size, config.attn_size, region_dim);
        let state_dim = h + d + config.embed_size;
        let shared = if config.share_lstm {
            Some(LstmWeights::register(store, &format!("{prefix}.shared_lstm"), state_dim, h, rng)?)
        } else {
            None
        };
        let make = |name: &str, store: &mut ParamStore<T>, rng: &mut R| -> Result<SubPolicy> {
            let lstm = match shared {
                Some(l) => l,
                None => LstmWeights::register(store, &format!("{prefix}.{name}.lstm"), state_dim, h, rng)?,
            };
            let attention = AttentionWeights::register(store, &format!("{prefix}.{name}"), h, d, a, rng)?;
            Ok(SubPolicy { lstm, attention })
        };
        let single = make("single", store, rng)?;
        let branches = match config.variant {
            CavpVariant::SingleOnly => None,
            CavpVariant::Full => {
                let context = make("context", store, rng)?;
                let composition = make("composition", store, rng)?;
                let output = make("output", store, rng)?;
                let w_c = store.add_uniform(format!("{prefix}.W_c"), d, 2 * d, rng)?;
                Some(Branches {
                    context,
                    composition,
                    output,
                    w_c,
                })
            }
        };
        Ok(Self {
            config,
            region_dim,
            single,
            branches,
        })
    }

    pub fn config(&self) -> &CavpConfig {
        &self.config
    }

    pub fn region_dim(&self) -> usize {
        self.region_dim
    }

    /// Sub-policies in the order single, context, composition, output.
    pub fn sub_policies(&self) -> Vec<SubPolicy> {
        let mut v = vec![self.single];
        if let Some(b) = &self.branches {
            v.extend([b.context, b.composition, b.output]);
        }
        v
    }

    pub fn fusion_weight(&self) -> Option<ParamId> {
        self.branches.map(|b| b.w_c)
    }

    /// Runs the sub-policy LSTMs on the shared state. With shared weights the
    /// four slots evolve identically, so the cell is evaluated once.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        state: &PolicyState,
        rec: &CavpRecurrent,
    ) -> Result<CavpRecurrent> {
        let policies = self.sub_policies();
        let mut out = *rec;
        if self.config.share_lstm {
            let (h, c) = g.lstm_cell(&self.single.lstm, state.vector(), rec.slots[0].h, rec.slots[0].c)?;
            out.slots = [Recurrent { h, c }; 4];
        } else {
            for (slot, sp) in policies.iter().enumerate() {
                let r = rec.slots[slot];
                let (h, c) = g.lstm_cell(&sp.lstm, state.vector(), r.h, r.c)?;
                out.slots[slot] = Recurrent { h, c };
            }
        }
        Ok(out)
    }

    /// Single sub-policy: attend over the regions. Returns `(π^s, v_t^s)`.
    pub fn single_sp<T: Scalar>(&self, g: &mut Graph<'_, T>, hidden: Var, regions: &RegionInputs) -> Result<(Var, Var)> {
        attend(g, &self.single.attention, hidden, &regions.regions)
    }

    fn branches(&self) -> Result<&Branches> {
        self.branches
            .as_ref()
            .ok_or_else(|| Error::Config("context sub-policies are disabled in the single-only variant".into()))
    }

    /// Context sub-policy and fusion. Returns the context distribution (when
    /// one was formed) and the fused features `c_{t,i} = W_c [f_t^c; r_i]`.
    /// An empty pool yields the zero context vector.
    pub fn context_sp<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        hidden: Var,
        pool: &[Var],
        regions: &RegionInputs,
    ) -> Result<(Option<Var>, Var, Vec<Var>)> {
        let b = *self.branches()?;
        let (dist, context) = match (self.config.context_mode, pool.last()) {
            (_, None) => (None, g.zeros(self.region_dim)),
            (ContextMode::LastStep, Some(&last)) => (None, last),
            (ContextMode::FullHistory, Some(_)) => {
                let (d, f) = attend(g, &b.context.attention, hidden, pool)?;
                (Some(d), f)
            }
        };
        let mut fused = Vec::with_capacity(regions.regions.len());
        for &r in &regions.regions {
            let cat = g.concat(&[context, r]);
            fused.push(g.affine(b.w_c, cat, None)?);
        }
        Ok((dist, context, fused))
    }

    /// Composition sub-policy over the fused context features. Returns `(π^p, v_t^p)`.
    pub fn composition_sp<T: Scalar>(&self, g: &mut Graph<'_, T>, hidden: Var, fused: &[Var]) -> Result<(Var, Var)> {
        let b = *self.branches()?;
        attend(g, &b.composition.attention, hidden, fused)
    }

    /// Output sub-policy over `{v_t^s, v_t^p, r̄}`. Returns `(π^o, v_t)`.
    pub fn output_sp<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        hidden: Var,
        v_single: Var,
        v_comp: Var,
        mean: Var,
    ) -> Result<(Var, Var)> {
        let b = *self.branches()?;
        attend(g, &b.output.attention, hidden, &[v_single, v_comp, mean])
    }

    /// One full CAVP decision with an explicit context pool. The caller owns
    /// the pool; see [`Cavp::step_with_buffer`] for the append-as-you-go form.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        state: &PolicyState,
        regions: &RegionInputs,
        pool: &[Var],
        rec: &CavpRecurrent,
    ) -> Result<CavpOutput> {
        let rec = self.encode(g, state, rec)?;
        let (single, v_single) = self.single_sp(g, rec.slots[0].h, regions)?;
        if self.branches.is_none() {
            return Ok(CavpOutput {
                v: v_single,
                single_hidden: rec.slots[0].h,
                single,
                context: None,
                composition: None,
                output: None,
                recurrent: rec,
            });
        }
        let (context, _, fused) = self.context_sp(g, rec.slots[1].h, pool, regions)?;
        let (composition, v_comp) = self.composition_sp(g, rec.slots[2].h, &fused)?;
        let (output, v) = self.output_sp(g, rec.slots[3].h, v_single, v_comp, regions.mean)?;
        Ok(CavpOutput {
            v,
            single_hidden: rec.slots[0].h,
            single,
            context,
            composition: Some(composition),
            output: Some(output),
            recurrent: rec,
        })
    }

    /// [`Cavp::step`] over `buffer`, then appends `v_t` to it.
    pub fn step_with_buffer<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        state: &PolicyState,
        regions: &RegionInputs,
        buffer: &mut VisualContextBuffer,
        rec: &CavpRecurrent,
    ) -> Result<CavpOutput> {
        let out = self.step(g, state, regions, buffer.items(), rec)?;
        buffer.push(out.v);
        Ok(out)
    }
}

/// Attention argmaxes of one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argmaxes {
    pub single: usize,
    pub context: Option<usize>,
    pub composition: Option<usize>,
    pub output: Option<usize>,
}

/// One line of an attention trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub step: usize,
    pub single: Vec<f64>,
    pub context: Vec<f64>,
    pub composition: Vec<f64>,
    pub output: Vec<f64>,
    pub argmaxes: Argmaxes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
}

impl AttentionRecord {
    pub fn from_output<T: Scalar>(g: &Graph<'_, T>, step: usize, out: &CavpOutput) -> Self {
        let read = |v: Option<Var>| -> Vec<f64> { v.map(|v| g.value(v).iter().map(|x| x.as_f64()).collect()).unwrap_or_default() };
        let single = read(Some(out.single));
        let context = read(out.context);
        let composition = read(out.composition);
        let output = read(out.output);
        let am = |d: &Vec<f64>| if d.is_empty() { None } else { Some(hard_argmax(d)) };
        Self {
            step,
            argmaxes: Argmaxes {
                single: hard_argmax(&single),
                context: am(&context),
                composition: am(&composition),
                output: am(&output),
            },
            single,
            context,
            composition,
            output,
            word: None,
        }
    }
}

/// Per-step attention distributions of one decode.
pub type AttentionTrace = Vec<AttentionRecord>;
