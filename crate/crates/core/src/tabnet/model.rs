use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamId, ParamStore, Tensor};

use super::config::TabNetConfig;
use super::explain::MaskReport;
use super::layers::{
    AttentiveTransformer, BatchNorm, FeatureTransformer, GluBlock, Linear, MaskEntropy, Mode, StatUpdates,
};

/// ε inside the log of the mask-entropy penalty.
pub const SPARSITY_EPS: f64 = 1e-10;

/// Rows per chunk for eval-mode inference.
const INFERENCE_CHUNK: usize = 4096;

/// A raw input column and where it lands in the embedded feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceColumn {
    pub name: String,
    /// Embedding table for categorical columns (`cardinality + 1` rows, the
    /// last one for unseen values).
    pub table: Option<ParamId>,
    pub cardinality: usize,
    pub start: usize,
    pub width: usize,
}

/// Node handles from one forward pass.
#[derive(Debug)]
pub struct ForwardOutput {
    pub embedded: NodeId,
    /// Batch-normalized embedded features, the input every mask applies to.
    pub features: NodeId,
    pub logits: NodeId,
    /// Mask of each decision step, `B × D`.
    pub masks: Vec<NodeId>,
    /// `relu(d_i)` of each decision step, `B × n_d`.
    pub decisions: Vec<NodeId>,
    /// Prior scale after each step.
    pub priors: Vec<NodeId>,
    /// Mean mask entropy over steps and rows.
    pub sparsity: NodeId,
    pub updates: StatUpdates,
}

#[derive(Debug, Clone)]
pub struct TabNet {
    pub(crate) config: TabNetConfig,
    pub(crate) schema: FeatureSchema,
    pub(crate) store: ParamStore,
    columns: Vec<SourceColumn>,
    d_model: usize,
    n_classes: usize,
    bn_in: BatchNorm,
    /// Index 0 is the initial pass over unmasked features; index `i` serves
    /// decision step `i`.
    transformers: Vec<FeatureTransformer>,
    /// Index `i - 1` serves decision step `i`.
    attention: Vec<AttentiveTransformer>,
    head: Linear,
    pub(crate) fitted: bool,
    /// Free-form run information carried through persistence.
    pub metadata: serde_json::Value,
}

/// `prior ⊙ (gamma_relax − mask)`.
pub fn update_prior(prior: &Tensor, mask: &Tensor, gamma_relax: f64) -> Result<Tensor> {
    if !prior.same_shape(mask) {
        return Err(Error::dim(
            "update_prior",
            format!("prior {:?} vs mask {:?}", prior.shape(), mask.shape()),
        ));
    }
    let data = prior
        .data()
        .iter()
        .zip(mask.data())
        .map(|(p, m)| p * (gamma_relax - m))
        .collect();
    Tensor::new(prior.shape().to_vec(), data)
}

impl TabNet {
    pub fn new(config: TabNetConfig, schema: &FeatureSchema) -> Result<Self> {
        config.validate()?;
        let n_classes = schema.n_classes();
        if n_classes < 2 {
            return Err(Error::Config(format!("need at least two classes, schema has {n_classes}")));
        }
        if schema.n_features() == 0 {
            return Err(Error::Config("schema has no feature columns".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();

        let embed_init = Normal::new(0.0, 0.1).expect("valid normal");
        let mut columns = Vec::new();
        let mut offset = 0;
        for col in schema.features() {
            let (table, cardinality, width) = match col.kind {
                ColumnKind::Categorical => {
                    let card = col.cardinality.unwrap_or(col.encoding.len());
                    let rows = card + 1;
                    let data = (0..rows * config.embed_dims).map(|_| embed_init.sample(&mut rng)).collect();
                    let t = Tensor::new(vec![rows, config.embed_dims], data)?;
                    (Some(store.add(format!("embed.{}", col.name), t, true)), card, config.embed_dims)
                }
                _ => (None, 0, 1),
            };
            columns.push(SourceColumn {
                name: col.name.clone(),
                table,
                cardinality,
                start: offset,
                width,
            });
            offset += width;
        }
        let d_model = offset;
        let hidden = config.hidden();

        let bn_in = BatchNorm::new(&mut store, "bn_in", d_model);
        let shared = [
            Linear::new(&mut store, &mut rng, "ft.shared0.fc", d_model, 2 * hidden),
            Linear::new(&mut store, &mut rng, "ft.shared1.fc", hidden, 2 * hidden),
        ];
        let mut transformers = Vec::with_capacity(config.n_steps + 1);
        for step in 0..=config.n_steps {
            let p = format!("ft.step{step}");
            let blocks = [
                GluBlock {
                    fc: shared[0],
                    bn: BatchNorm::new(&mut store, &format!("{p}.shared0.bn"), 2 * hidden),
                },
                GluBlock {
                    fc: shared[1],
                    bn: BatchNorm::new(&mut store, &format!("{p}.shared1.bn"), 2 * hidden),
                },
                GluBlock {
                    fc: Linear::new(&mut store, &mut rng, &format!("{p}.own0.fc"), hidden, 2 * hidden),
                    bn: BatchNorm::new(&mut store, &format!("{p}.own0.bn"), 2 * hidden),
                },
                GluBlock {
                    fc: Linear::new(&mut store, &mut rng, &format!("{p}.own1.fc"), hidden, 2 * hidden),
                    bn: BatchNorm::new(&mut store, &format!("{p}.own1.bn"), 2 * hidden),
                },
            ];
            transformers.push(FeatureTransformer { blocks });
        }
        let attention = (1..=config.n_steps)
            .map(|step| AttentiveTransformer {
                fc: Linear::new(&mut store, &mut rng, &format!("att.step{step}.fc"), config.n_a, d_model),
                bn: BatchNorm::new(&mut store, &format!("att.step{step}.bn"), d_model),
            })
            .collect();
        let head = Linear::new(&mut store, &mut rng, "head.fc", config.n_d, n_classes);

        Ok(Self {
            config,
            schema: schema.clone(),
            store,
            columns,
            d_model,
            n_classes,
            bn_in,
            transformers,
            attention,
            head,
            fitted: false,
            metadata: serde_json::Value::Null,
        })
    }

    pub fn config(&self) -> &TabNetConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn columns(&self) -> &[SourceColumn] {
        &self.columns
    }

    /// Width `D` of the embedded feature matrix.
    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn n_raw_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn mark_fitted(&mut self) {
        self.fitted = true;
    }

    pub fn feature_transformer(&self, step: usize) -> Result<&FeatureTransformer> {
        self.transformers
            .get(step)
            .ok_or_else(|| Error::Contract(format!("step {step} outside 0..={}", self.config.n_steps)))
    }

    pub fn attentive_transformer(&self, step: usize) -> Result<&AttentiveTransformer> {
        step.checked_sub(1)
            .and_then(|i| self.attention.get(i))
            .ok_or_else(|| Error::Contract(format!("no attentive transformer for step {step}")))
    }

    pub fn apply_updates(&mut self, updates: StatUpdates) {
        for (id, values) in updates {
            self.store.value_mut(id).data_mut().copy_from_slice(&values);
        }
    }

    fn check_raw(&self, raw: &[f64], rows: usize) -> Result<()> {
        let d = self.n_raw_features();
        if rows == 0 || raw.len() != rows * d {
            return Err(Error::dim(
                "embed",
                format!("{} values do not form {rows} rows of {d} raw features", raw.len()),
            ));
        }
        Ok(())
    }

    /// Maps raw encoded rows to the embedded matrix: continuous columns pass
    /// through, categorical codes index their embedding tables.
    pub fn embed(&self, g: &mut Graph, raw: &[f64], rows: usize) -> Result<NodeId> {
        self.check_raw(raw, rows)?;
        let d_raw = self.n_raw_features();
        let mut parts = Vec::new();
        let mut j = 0;
        while j < d_raw {
            let col = &self.columns[j];
            if let Some(table) = col.table {
                let mut codes = Vec::with_capacity(rows);
                for r in 0..rows {
                    let v = raw[r * d_raw + j];
                    if v.fract() != 0.0 || v < 0.0 || v > col.cardinality as f64 {
                        return Err(Error::Encoding {
                            column: col.name.clone(),
                            detail: format!("code {v} at row {r} outside 0..={}", col.cardinality),
                        });
                    }
                    codes.push(v as usize);
                }
                let t = g.param(&self.store, table);
                parts.push(g.gather(t, codes)?);
                j += 1;
            } else {
                // contiguous continuous columns go in as one block
                let end = (j..d_raw).find(|&k| self.columns[k].table.is_some()).unwrap_or(d_raw);
                let mut block = Vec::with_capacity(rows * (end - j));
                for r in 0..rows {
                    block.extend_from_slice(&raw[r * d_raw + j..r * d_raw + end]);
                }
                if block.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Contract("continuous features must be finite".into()));
                }
                parts.push(g.constant(Tensor::matrix(rows, end - j, block)?));
                j = end;
            }
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            g.concat_cols(&parts)
        }
    }

    pub fn forward(&self, g: &mut Graph, raw: &[f64], rows: usize, mode: Mode) -> Result<ForwardOutput> {
        self.forward_impl(g, raw, rows, mode, None)
    }

    /// Forward pass with every step's mask supplied by the caller instead of
    /// the attentive transformers. Used to probe the decision path alone.
    pub fn forward_with_masks(
        &self,
        g: &mut Graph,
        raw: &[f64],
        rows: usize,
        mode: Mode,
        masks: &[Tensor],
    ) -> Result<ForwardOutput> {
        if masks.len() != self.config.n_steps {
            return Err(Error::Contract(format!(
                "{} masks given for {} steps",
                masks.len(),
                self.config.n_steps
            )));
        }
        self.forward_impl(g, raw, rows, mode, Some(masks))
    }

    fn forward_impl(
        &self,
        g: &mut Graph,
        raw: &[f64],
        rows: usize,
        mode: Mode,
        fixed_masks: Option<&[Tensor]>,
    ) -> Result<ForwardOutput> {
        let spec = self.config.bn_spec();
        let mut updates = StatUpdates::new();
        let embedded = self.embed(g, raw, rows)?;
        let x = self.bn_in.forward(g, &self.store, embedded, mode, &spec, &mut updates)?;

        let n_d = self.config.n_d;
        let hidden = self.config.hidden();
        let h0 = self.transformers[0].forward(g, &self.store, x, mode, &spec, &mut updates)?;
        let mut attn = g.slice_cols(h0, n_d, hidden)?;
        let mut prior = g.constant(Tensor::full(&[rows, self.d_model], 1.0));

        let mut masks = Vec::with_capacity(self.config.n_steps);
        let mut decisions = Vec::with_capacity(self.config.n_steps);
        let mut priors = Vec::with_capacity(self.config.n_steps);
        let mut entropies = Vec::with_capacity(self.config.n_steps);
        let mut aggregate: Option<NodeId> = None;
        for step in 1..=self.config.n_steps {
            let mask = match fixed_masks {
                Some(m) => {
                    let t = &m[step - 1];
                    if t.shape() != [rows, self.d_model] {
                        return Err(Error::dim(
                            "forward_with_masks",
                            format!("mask {:?}, expected [{rows}, {}]", t.shape(), self.d_model),
                        ));
                    }
                    g.constant(t.clone())
                }
                None => {
                    let att = &self.attention[step - 1];
                    att.forward(g, &self.store, attn, prior, mode, &spec, &mut updates)?.1
                }
            };
            let masked = g.mul(mask, x)?;
            let h = self.transformers[step].forward(g, &self.store, masked, mode, &spec, &mut updates)?;
            let d = g.slice_cols(h, 0, n_d)?;
            let decision = g.relu(d);
            aggregate = Some(match aggregate {
                Some(acc) => g.add(acc, decision)?,
                None => decision,
            });
            let remaining = g.affine(mask, -1.0, self.config.gamma_relax);
            prior = g.mul(prior, remaining)?;
            entropies.push(MaskEntropy { eps: SPARSITY_EPS }.record(g, mask));
            attn = g.slice_cols(h, n_d, hidden)?;
            masks.push(mask);
            decisions.push(decision);
            priors.push(prior);
        }
        let aggregate = aggregate.expect("at least one step");
        let logits = self.head.forward(g, &self.store, aggregate)?;
        let mut total = entropies[0];
        for &e in &entropies[1..] {
            total = g.add(total, e)?;
        }
        let sparsity = g.scale(total, 1.0 / self.config.n_steps as f64);
        Ok(ForwardOutput {
            embedded,
            features: x,
            logits,
            masks,
            decisions,
            priors,
            sparsity,
            updates,
        })
    }

    /// Eval-mode logits, computed in fixed-size chunks spread over up to
    /// [`crate::threads`] threads.
    pub fn predict_logits(&self, raw: &[f64], rows: usize) -> Result<Tensor> {
        self.check_raw(raw, rows)?;
        let d_raw = self.n_raw_features();
        let chunks: Vec<&[f64]> = raw.chunks(INFERENCE_CHUNK * d_raw).collect();
        let run = |chunk: &[f64]| -> Result<Vec<f64>> {
            let mut g = Graph::new();
            let out = self.forward(&mut g, chunk, chunk.len() / d_raw, Mode::Eval)?;
            Ok(g.value(out.logits).data().to_vec())
        };
        let threads = crate::threads().min(chunks.len()).max(1);
        let results: Vec<Result<Vec<f64>>> = if threads == 1 {
            chunks.iter().map(|c| run(c)).collect()
        } else {
            let mut slots: Vec<Option<Result<Vec<f64>>>> = (0..chunks.len()).map(|_| None).collect();
            std::thread::scope(|s| {
                for (t, slot_group) in slots.chunks_mut(chunks.len().div_ceil(threads)).enumerate() {
                    let base = t * chunks.len().div_ceil(threads);
                    let chunks = &chunks;
                    let run = &run;
                    s.spawn(move || {
                        for (k, slot) in slot_group.iter_mut().enumerate() {
                            *slot = Some(run(chunks[base + k]));
                        }
                    });
                }
            });
            slots.into_iter().map(|s| s.expect("every chunk ran")).collect()
        };
        let mut data = Vec::with_capacity(rows * self.n_classes);
        for r in results {
            data.extend(r?);
        }
        Tensor::matrix(rows, self.n_classes, data)
    }

    pub fn predict_proba(&self, raw: &[f64], rows: usize) -> Result<Tensor> {
        let logits = self.predict_logits(raw, rows)?;
        let c = logits.cols();
        let mut p = logits.into_data();
        for row in p.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Tensor::matrix(rows, c, p)
    }

    pub fn predict(&self, raw: &[f64], rows: usize) -> Result<Vec<usize>> {
        Ok(self.predict_logits(raw, rows)?.argmax_rows())
    }

    /// Per-step masks and feature importances for `rows` in eval mode.
    pub fn explain(&self, raw: &[f64], rows: usize) -> Result<MaskReport> {
        if !self.fitted {
            return Err(Error::State("explain needs a trained model".into()));
        }
        let mut g = Graph::new();
        let out = self.forward(&mut g, raw, rows, Mode::Eval)?;
        let masks: Vec<Tensor> = out.masks.iter().map(|&m| g.value(m).clone()).collect();
        let decisions: Vec<&Tensor> = out.decisions.iter().map(|&d| g.value(d)).collect();
        MaskReport::build(&self.columns, masks, &decisions)
    }
}
