#![allow(dead_code)]

use attentab::data::{ColumnKind, ColumnSchema, EncodedDataset, FeatureSchema, ValueType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn continuous(name: String) -> ColumnSchema {
    ColumnSchema {
        name,
        kind: ColumnKind::Continuous,
        value_type: ValueType::Continuous,
        cardinality: None,
        encoding: vec![],
        imputation: None,
        missing_fraction: 0.0,
        drop_reason: None,
    }
}

fn categorical(name: String, cardinality: usize) -> ColumnSchema {
    ColumnSchema {
        name,
        kind: ColumnKind::Categorical,
        value_type: ValueType::Categorical,
        cardinality: Some(cardinality),
        encoding: (0..cardinality).map(|v| format!("v{v}")).collect(),
        imputation: None,
        missing_fraction: 0.0,
        drop_reason: None,
    }
}

/// Continuous columns `x0..`, then categorical columns `c0..`, then a target
/// `y` with classes `k0..`.
pub fn schema(n_continuous: usize, cardinalities: &[usize], classes: usize) -> FeatureSchema {
    let mut columns: Vec<ColumnSchema> = (0..n_continuous).map(|i| continuous(format!("x{i}"))).collect();
    columns.extend(cardinalities.iter().enumerate().map(|(i, &c)| categorical(format!("c{i}"), c)));
    let mut target = categorical("y".into(), classes);
    target.kind = ColumnKind::Target;
    target.encoding = (0..classes).map(|v| format!("k{v}")).collect();
    columns.push(target);
    FeatureSchema { columns }
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Number of informative columns in [`three_class_synthetic`].
pub const INFORMATIVE: usize = 5;

/// Three classes from a nonlinear rule over the first five of `5 + noise`
/// standard-normal columns:
/// class 0 when `x0 + x1·x2 > 0.5`, otherwise class 1 when `x3² + x4 > 1`,
/// otherwise class 2.
pub fn three_class_synthetic(rows: usize, noise: usize, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = INFORMATIVE + noise;
    let features = normal_matrix(&mut rng, rows, d, 1.0);
    let labels = features
        .chunks(d)
        .map(|x| {
            if x[0] + x[1] * x[2] > 0.5 {
                0
            } else if x[3] * x[3] + x[4] > 1.0 {
                1
            } else {
                2
            }
        })
        .collect();
    EncodedDataset::new(features, labels, schema(d, &[], 3)).unwrap()
}

/// Binary task where roughly `minority` of the rows belong to class 1, which
/// occupies a shifted region of the first two of four features with some
/// overlap.
pub fn imbalanced_binary(rows: usize, minority: f64, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4;
    let mut features = Vec::with_capacity(rows * d);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let y = usize::from(rng.gen::<f64>() < minority);
        let mut x = normal_matrix(&mut rng, 1, d, 1.0);
        if y == 1 {
            x[0] += 1.5;
            x[1] += 1.5;
        }
        features.extend(x);
        labels.push(y);
    }
    EncodedDataset::new(features, labels, schema(d, &[], 2)).unwrap()
}

/// Euclidean projection onto the probability simplex by sorting.
pub fn simplex_projection(z: &[f64]) -> Vec<f64> {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut k = 0;
    let mut tau_sum = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (i + 1) as f64 * v > cumsum {
            k = i + 1;
            tau_sum = cumsum;
        }
    }
    let tau = (tau_sum - 1.0) / k as f64;
    z.iter().map(|v| (v - tau).max(0.0)).collect()
}

pub mod reference {
    //! Eval-mode TabNet forward written with plain loops over the named
    //! parameters, independent of the tape.

    use attentab::numerics::ParamStore;

    use super::simplex_projection;

    pub type Mat = Vec<Vec<f64>>;

    fn p<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
        let id = store.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
        store.value(id).data()
    }

    pub fn linear(store: &ParamStore, name: &str, x: &Mat) -> Mat {
        let w = p(store, &format!("{name}.w"));
        let b = p(store, &format!("{name}.b"));
        let out = b.len();
        x.iter()
            .map(|row| {
                (0..out)
                    .map(|j| b[j] + row.iter().enumerate().map(|(i, v)| v * w[i * out + j]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    pub fn bn_eval(store: &ParamStore, name: &str, x: &Mat, eps: f64) -> Mat {
        let g = p(store, &format!("{name}.gamma"));
        let b = p(store, &format!("{name}.beta"));
        let m = p(store, &format!("{name}.running_mean"));
        let v = p(store, &format!("{name}.running_var"));
        x.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, x)| g[j] * (x - m[j]) / (v[j] + eps).sqrt() + b[j])
                    .collect()
            })
            .collect()
    }

    pub fn glu(x: &Mat) -> Mat {
        x.iter()
            .map(|row| {
                let h = row.len() / 2;
                (0..h).map(|j| row[j] / (1.0 + (-row[h + j]).exp())).collect()
            })
            .collect()
    }

    fn block(store: &ParamStore, fc: &str, bn: &str, x: &Mat, eps: f64) -> Mat {
        glu(&bn_eval(store, bn, &linear(store, fc, x), eps))
    }

    pub fn feature_transformer(store: &ParamStore, step: usize, x: &Mat, eps: f64) -> Mat {
        let names = [
            ("ft.shared0.fc".to_string(), format!("ft.step{step}.shared0.bn")),
            ("ft.shared1.fc".to_string(), format!("ft.step{step}.shared1.bn")),
            (format!("ft.step{step}.own0.fc"), format!("ft.step{step}.own0.bn")),
            (format!("ft.step{step}.own1.fc"), format!("ft.step{step}.own1.bn")),
        ];
        let mut h = block(store, &names[0].0, &names[0].1, x, eps);
        for (fc, bn) in &names[1..] {
            let out = block(store, fc, bn, &h, eps);
            h = h
                .iter()
                .zip(&out)
                .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a + b) * 0.5f64.sqrt()).collect())
                .collect();
        }
        h
    }

    pub struct Output {
        pub logits: Mat,
        pub masks: Vec<Mat>,
    }

    /// Continuous-only models: `raw` rows are the embedded features.
    pub fn forward(store: &ParamStore, raw: &Mat, n_d: usize, n_steps: usize, gamma: f64, eps: f64) -> Output {
        let x = bn_eval(store, "bn_in", raw, eps);
        let h0 = feature_transformer(store, 0, &x, eps);
        let mut a: Mat = h0.iter().map(|r| r[n_d..].to_vec()).collect();
        let mut prior: Mat = x.iter().map(|r| vec![1.0; r.len()]).collect();
        let mut agg: Mat = x.iter().map(|_| vec![0.0; n_d]).collect();
        let mut masks = Vec::new();
        for step in 1..=n_steps {
            let h = bn_eval(store, &format!("att.step{step}.bn"), &linear(store, &format!("att.step{step}.fc"), &a), eps);
            let mask: Mat = h
                .iter()
                .zip(&prior)
                .map(|(h, p)| simplex_projection(&h.iter().zip(p).map(|(h, p)| h * p).collect::<Vec<_>>()))
                .collect();
            let masked: Mat = mask.iter().zip(&x).map(|(m, x)| m.iter().zip(x).map(|(m, x)| m * x).collect()).collect();
            let out = feature_transformer(store, step, &masked, eps);
            for (acc, row) in agg.iter_mut().zip(&out) {
                for (s, v) in acc.iter_mut().zip(&row[..n_d]) {
                    *s += v.max(0.0);
                }
            }
            a = out.iter().map(|r| r[n_d..].to_vec()).collect();
            for (pr, m) in prior.iter_mut().zip(&mask) {
                for (p, m) in pr.iter_mut().zip(m) {
                    *p *= gamma - m;
                }
            }
            masks.push(mask);
        }
        Output {
            logits: linear(store, "head.fc", &agg),
            masks,
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub mod gradcheck {
    use attentab::numerics::{Graph, NodeId, ParamStore, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{normal_matrix, rel_err};

    pub const H: f64 = 1e-5;
    /// Denominator floor for relative errors, so that gradients which are
    /// zero up to rounding do not divide by zero.
    pub const FLOOR: f64 = 1e-6;

    /// Largest relative error between tape gradients and central differences
    /// of `Σ R ⊙ build(inputs)` for a fixed random `R`.
    pub fn max_rel_err(inputs: &[Tensor], build: impl Fn(&mut Graph, &[NodeId]) -> NodeId, seed: u64) -> f64 {
        let mut store = ParamStore::new();
        let ids: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| store.add(format!("in{i}"), t.clone(), true))
            .collect();
        let mut projection: Option<Tensor> = None;
        let mut eval = |store: &ParamStore, backward: bool| -> (f64, Option<ParamStore>) {
            let mut g = Graph::new();
            let leaves: Vec<_> = ids.iter().map(|&id| g.param(store, id)).collect();
            let out = build(&mut g, &leaves);
            let r = projection
                .get_or_insert_with(|| {
                    let shape = g.value(out).shape().to_vec();
                    let n = g.value(out).len();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    Tensor::new(shape, normal_matrix(&mut rng, 1, n, 1.0)).unwrap()
                })
                .clone();
            let r = g.constant(r);
            let prod = g.mul(out, r).unwrap();
            let loss = g.sum(prod);
            let value = g.value(loss).data()[0];
            if !backward {
                return (value, None);
            }
            let mut s = store.clone();
            s.zero_grad();
            g.backward_into(loss, &mut s).unwrap();
            (value, Some(s))
        };
        let (_, grads) = eval(&store, true);
        let grads = grads.unwrap();
        let mut worst: f64 = 0.0;
        for &id in &ids {
            for k in 0..store.value(id).len() {
                let orig = store.value(id).data()[k];
                store.value_mut(id).data_mut()[k] = orig + H;
                let plus = eval(&store, false).0;
                store.value_mut(id).data_mut()[k] = orig - H;
                let minus = eval(&store, false).0;
                store.value_mut(id).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * H);
                worst = worst.max(rel_err(grads.grad(id).data()[k], numeric, FLOOR));
            }
        }
        worst
    }

    /// Largest relative error over every trainable parameter of `store` for
    /// a scalar function evaluated on a copy of the store.
    pub fn max_rel_err_store(
        store: &ParamStore,
        analytic: &ParamStore,
        f: impl Fn(&ParamStore) -> f64,
    ) -> (f64, String) {
        let mut s = store.clone();
        let mut worst = (0.0f64, String::new());
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).trainable {
                continue;
            }
            for k in 0..store.value(id).len() {
                let orig = s.value(id).data()[k];
                s.value_mut(id).data_mut()[k] = orig + H;
                let plus = f(&s);
                s.value_mut(id).data_mut()[k] = orig - H;
                let minus = f(&s);
                s.value_mut(id).data_mut()[k] = orig;
                let e = rel_err(analytic.grad(id).data()[k], (plus - minus) / (2.0 * H), FLOOR);
                if e > worst.0 {
                    worst = (e, format!("{}[{k}]", store.get(id).name));
                }
            }
        }
        worst
    }
}

/// Tiny TabNet (4 continuous features, `n_d = n_a = 2`, two steps, batch of
/// three) with a cross-entropy plus sparsity objective in training mode.
/// Returns the worst relative gradient error and the parameter it occurs in.
pub fn tiny_end_to_end_gradcheck(seed: u64) -> (f64, String) {
    use attentab::losses::LossSpec;
    use attentab::numerics::{Graph, ParamStore};
    use attentab::tabnet::{Mode, TabNet, TabNetConfig};

    let cfg = TabNetConfig {
        n_d: 2,
        n_a: 2,
        n_steps: 2,
        lambda_sparse: 0.1,
        seed,
        ..Default::default()
    };
    let model = TabNet::new(cfg, &schema(4, &[], 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let raw = normal_matrix(&mut rng, 3, 4, 1.5);
    let labels = [0usize, 2, 1];
    let objective = |store: &ParamStore, backward: bool| -> (f64, Option<ParamStore>) {
        let mut m = model.clone();
        *m.store_mut() = store.clone();
        let mut g = Graph::new();
        let out = m.forward(&mut g, &raw, 3, Mode::Train).unwrap();
        let lp = g.log_softmax(out.logits);
        let task = LossSpec::CrossEntropy.record(&mut g, lp, &labels).unwrap();
        let pen = g.scale(out.sparsity, 0.1);
        let total = g.add(task, pen).unwrap();
        let value = g.value(total).data()[0];
        if !backward {
            return (value, None);
        }
        m.store_mut().zero_grad();
        g.backward_into(total, m.store_mut()).unwrap();
        (value, Some(m.store().clone()))
    };
    let analytic = objective(model.store(), true).1.unwrap();
    gradcheck::max_rel_err_store(model.store(), &analytic, |s| objective(s, false).0)
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Schema and encoding goldens for `wells30.csv`, whose columns carry
/// engineered missing patterns. Returns the first mismatch found.
pub fn wells30_golden() -> Result<(), String> {
    use attentab::data::{encode, fit_schema, load_csv, CsvOptions, SchemaOptions};

    let fit = || -> Result<(FeatureSchema, EncodedDataset), String> {
        let table = load_csv(fixture("wells30.csv"), &CsvOptions::default()).map_err(|e| e.to_string())?;
        let schema = fit_schema(&table, &SchemaOptions::default()).map_err(|e| e.to_string())?;
        let data = encode(&table, &schema).map_err(|e| e.to_string())?;
        Ok((schema, data))
    };
    let (schema, data) = fit()?;
    let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };

    let col = |name: &str| schema.columns.iter().find(|c| c.name == name).unwrap();
    // 24/30 and 30/30 missing exceed one half; installer sits at exactly one half
    let dropped: Vec<&str> = schema
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Drop && c.drop_reason.as_deref() != Some("identifier column"))
        .map(|c| c.name.as_str())
        .collect();
    check(dropped == ["scheme_name", "notes"], &format!("dropped {dropped:?}"))?;
    check(col("installer").kind == ColumnKind::Categorical, "installer kept at exactly 50% missing")?;
    let imputations = [
        ("amount_tsh", Some("0.0")), // three-way tie, first seen wins
        ("funder", Some("Govt")),
        ("permit", Some("True")),
        ("installer", Some("DWE")),
        ("gps_height", None),
    ];
    for (name, want) in imputations {
        check(col(name).imputation.as_deref() == want, &format!("{name} imputation {:?}", col(name).imputation))?;
    }
    check(col("funder").encoding == ["Govt", "Danida", "Hesawa", "World Bank"], "funder encoding")?;
    check(col("permit").encoding == ["False", "True"], "permit encoding")?;
    check(
        schema.classes() == ["functional", "functional needs repair", "non functional"],
        "class order",
    )?;
    check(data.class_counts == [16, 4, 10], &format!("class counts {:?}", data.class_counts))?;
    // features: amount_tsh, funder, permit, installer, gps_height
    let rows = [
        (0, [0.0, 0.0, 0.0, 0.0, 100.0], 0),
        (3, [0.0, 0.0, 1.0, 0.0, 211.0], 2),
        (4, [75.0, 0.0, 0.0, 0.0, 248.0], 1),
        (9, [75.0, 3.0, 1.0, 0.0, 183.0], 0),
    ];
    for (i, want, label) in rows {
        check(data.row(i) == want, &format!("row {i}: {:?}", data.row(i)))?;
        check(data.labels[i] == label, &format!("label {i}: {}", data.labels[i]))?;
    }
    check(data.features.iter().all(|v| v.is_finite()), "no missing values after encoding")?;

    let (schema2, data2) = fit()?;
    check(schema.to_json().unwrap() == schema2.to_json().unwrap(), "schema rerun differs")?;
    check(data.to_bytes().unwrap() == data2.to_bytes().unwrap(), "dataset rerun differs")?;
    Ok(())
}

/// Relative gradient error of every differentiable primitive and of each
/// loss, against central differences.
pub fn per_op_gradchecks() -> Vec<(String, f64)> {
    use attentab::losses::{FocalParams, LossSpec};
    use attentab::numerics::{BatchNormSpec, BnMode, Tensor};
    use attentab::tabnet::MaskEntropy;
    use gradcheck::max_rel_err;

    let random = |rows: usize, cols: usize, seed: u64, scale: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, normal_matrix(&mut rng, rows, cols, scale)).unwrap()
    };
    let vector = |n: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![n], normal_matrix(&mut rng, 1, n, 1.0)).unwrap()
    };
    let pair = [random(3, 4, 5, 1.0), random(3, 4, 6, 1.0)];
    let cols = [random(3, 4, 12, 1.0), random(3, 2, 13, 1.0)];
    let bn_inputs = [random(7, 3, 15, 2.0), vector(3, 14), vector(3, 16)];
    let bn = |virtual_batch| {
        let spec = BatchNormSpec { virtual_batch, ..Default::default() };
        max_rel_err(&bn_inputs, |g, n| {
            let (mut m, mut v) = (vec![0.0; 3], vec![1.0; 3]);
            g.batch_norm(n[0], n[1], n[2], &mut m, &mut v, BnMode::Train, &spec).unwrap()
        }, 11)
    };

    let mut out = vec![
        ("linear".into(), max_rel_err(&[random(4, 3, 1, 1.0), random(3, 5, 2, 1.0)], |g, n| g.linear(n[0], n[1], None).unwrap(), 7)),
        ("linear+bias".into(), max_rel_err(&[random(4, 3, 1, 1.0), random(3, 5, 2, 1.0), vector(5, 4)], |g, n| g.linear(n[0], n[1], Some(n[2])).unwrap(), 8)),
        ("add".into(), max_rel_err(&pair, |g, n| g.add(n[0], n[1]).unwrap(), 1)),
        ("mul".into(), max_rel_err(&pair, |g, n| g.mul(n[0], n[1]).unwrap(), 2)),
        ("affine".into(), max_rel_err(&pair, |g, n| g.affine(n[0], -1.0, 1.3), 3)),
        ("relu".into(), max_rel_err(&pair, |g, n| g.relu(n[0]), 4)),
        ("glu".into(), max_rel_err(&[random(3, 6, 9, 2.0)], |g, n| g.glu(n[0]).unwrap(), 5)),
        ("sparsemax".into(), max_rel_err(&[random(5, 6, 10, 1.0)], |g, n| g.sparsemax(n[0]).unwrap(), 6)),
        ("log_softmax".into(), max_rel_err(&[random(4, 3, 11, 3.0)], |g, n| g.log_softmax(n[0]), 7)),
        ("slice_cols".into(), max_rel_err(&cols, |g, n| g.slice_cols(n[0], 1, 3).unwrap(), 8)),
        ("concat_cols".into(), max_rel_err(&cols, |g, n| g.concat_cols(&[n[1], n[0]]).unwrap(), 9)),
        ("gather".into(), max_rel_err(&cols, |g, n| g.gather(n[0], vec![2, 0, 2, 1]).unwrap(), 10)),
        ("sum".into(), max_rel_err(&pair, |g, n| g.sum(n[0]), 12)),
        ("mean".into(), max_rel_err(&pair, |g, n| g.mean(n[0]), 13)),
        ("batch_norm".into(), bn(None)),
        ("ghost_batch_norm".into(), bn(Some(3))),
        // strictly positive masks, where the entropy is smooth
        ("mask_entropy".into(), max_rel_err(&[random(4, 5, 16, 1.0).map(|v| 0.05 + v.abs())], |g, n| MaskEntropy { eps: 1e-10 }.record(g, n[0]), 12)),
    ];
    let labels = [0usize, 2, 1, 2];
    let losses = [
        ("cross_entropy", LossSpec::CrossEntropy),
        ("balanced_ce", LossSpec::Balanced { alpha: vec![0.5, 2.0, 1.2] }),
        ("focal_g2", LossSpec::Focal(FocalParams::new(2.0, vec![0.5, 2.0, 1.2]).unwrap())),
        ("focal_g0.5", LossSpec::Focal(FocalParams::new(0.5, vec![1.0; 3]).unwrap())),
    ];
    for (name, spec) in losses {
        let err = max_rel_err(&[random(4, 3, 17, 2.0)], |g, n| {
            let lp = g.log_softmax(n[0]);
            spec.record(g, lp, &labels).unwrap()
        }, 13);
        out.push((name.into(), err));
    }
    out
}
