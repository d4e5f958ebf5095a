use num_complex::Complex64;
use rayon::prelude::*;

use super::{LayerParams, ModelConfig, Net, OutputMode, TransDoaParams};
use crate::array_sim::{CMatrix, DoaLabel};
use crate::autodiff::{Tape, Tensor, Var};
use crate::{DoaError, Result};

/// Samples per forward chunk during batched inference.
const INFER_CHUNK: usize = 64;

/// Backbone features and the head's estimate for one SCM.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub features: Vec<f64>,
    pub estimate: Estimate,
}

/// Raw head output in degrees, split into azimuths and optional elevations.
/// Order follows the head units, not sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub thetas: Vec<f64>,
    pub phis: Option<Vec<f64>>,
}

impl Estimate {
    fn from_head(row: &[f64], mode: OutputMode) -> Self {
        match mode {
            OutputMode::OneD => Estimate { thetas: row.to_vec(), phis: None },
            OutputMode::TwoD => {
                let k = row.len() / 2;
                Estimate { thetas: row[..k].to_vec(), phis: Some(row[k..].to_vec()) }
            }
        }
    }

    pub fn into_label(self) -> DoaLabel {
        DoaLabel { thetas: self.thetas, phis: self.phis }
    }
}

/// Stacks the trace-normalized SCM columns of a batch as rows
/// `[Re r_i, Im r_i]`, giving a `(B·M) × 2M` matrix.
pub(crate) fn scm_rows(scms: &[&CMatrix], m: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(scms.len() * m * 2 * m);
    for scm in scms {
        if scm.nrows() != m || scm.ncols() != m {
            return Err(DoaError::Dimension(format!(
                "SCM is {}×{}, model expects {m}×{m}",
                scm.nrows(),
                scm.ncols()
            )));
        }
        let trace: f64 = (0..m).map(|i| scm[(i, i)].re).sum();
        if !(trace > 0.0 && trace.is_finite()) {
            return Err(DoaError::Numeric(format!("SCM trace {trace} is not positive")));
        }
        let inv = m as f64 / trace;
        for i in 0..m {
            let col = scm.column(i);
            data.extend(col.iter().map(|z: &Complex64| z.re * inv));
            data.extend(col.iter().map(|z: &Complex64| z.im * inv));
        }
    }
    Tensor::matrix(scms.len() * m, 2 * m, data)
}

pub(crate) fn leaves(tape: &mut Tape, params: &TransDoaParams) -> Net<Var> {
    params.map(|t| tape.leaf(t.clone()))
}

fn embed(tape: &mut Tape, p: &Net<Var>, input: Var, batch: usize) -> Result<Var> {
    let x = tape.linear(input, p.embed, None)?;
    let z = tape.prepend_row_per_group(p.doa_token, x, batch)?;
    tape.add_tiled(z, p.pos_embed)
}

fn attention(tape: &mut Tape, layer: &LayerParams<Var>, y: Var, config: &ModelConfig, batch: usize) -> Result<Var> {
    let dk = config.head_dim();
    let q = tape.linear(y, layer.wq, None)?;
    let k = tape.linear(y, layer.wk, None)?;
    let v = tape.linear(y, layer.wv, None)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let scores = tape.group_matmul(qh, kh, batch, true)?;
        let scores = tape.scale(scores, scale)?;
        let weights = tape.softmax_rows(scores)?;
        heads.push(tape.group_matmul(weights, vh, batch, false)?);
    }
    let cat = tape.concat_cols(&heads)?;
    tape.linear(cat, layer.wo, None)
}

fn block(tape: &mut Tape, layer: &LayerParams<Var>, z: Var, config: &ModelConfig, batch: usize) -> Result<Var> {
    let y = tape.layernorm(z, layer.ln1_gain, layer.ln1_bias)?;
    let a = attention(tape, layer, y, config, batch)?;
    let z = tape.add(z, a)?;
    let y = tape.layernorm(z, layer.ln2_gain, layer.ln2_bias)?;
    let h = tape.linear(y, layer.w1, Some(layer.b1))?;
    let h = tape.gelu(h)?;
    let h = tape.linear(h, layer.w2, Some(layer.b2))?;
    tape.add(z, h)
}

/// Backbone on a tape: returns the `B × D` token features.
pub(crate) fn encode(tape: &mut Tape, p: &Net<Var>, config: &ModelConfig, scms: &[&CMatrix]) -> Result<Var> {
    if scms.is_empty() {
        return Err(DoaError::Empty("forward batch".into()));
    }
    let batch = scms.len();
    let input = tape.leaf(scm_rows(scms, config.elements)?);
    let mut z = embed(tape, p, input, batch)?;
    for layer in &p.layers {
        z = block(tape, layer, z, config, batch)?;
    }
    let z = tape.layernorm(z, p.final_gain, p.final_bias)?;
    let seq = config.seq_len();
    let tokens: Vec<usize> = (0..batch).map(|b| b * seq).collect();
    tape.select_rows(z, &tokens)
}

/// Head on a tape: `B × outputs` degrees.
pub(crate) fn head(tape: &mut Tape, p: &Net<Var>, features: Var) -> Result<Var> {
    tape.linear(features, p.head_w, Some(p.head_b))
}

fn check(config: &ModelConfig, params: &TransDoaParams) -> Result<()> {
    config.validate()?;
    if params.layers.len() != config.depth || params.embed.shape() != [config.embed_dim, 2 * config.elements] {
        return Err(DoaError::Dimension("parameters do not match model config".into()));
    }
    Ok(())
}

/// Embedded sequence for one SCM, one row per position (`(M+1) × D`),
/// token first.
pub fn embed_scm(config: &ModelConfig, params: &TransDoaParams, scm: &CMatrix) -> Result<Tensor> {
    check(config, params)?;
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params);
    let input = tape.leaf(scm_rows(&[scm], config.elements)?);
    let z = embed(&mut tape, &p, input, 1)?;
    Ok(tape.value(z).clone())
}

/// Multi-head self-attention of one layer applied to a single sequence
/// (`(M+1) × D`, one row per position).
pub fn mhsa(config: &ModelConfig, layer: &LayerParams<Tensor>, z: &Tensor) -> Result<Tensor> {
    if z.cols() != config.embed_dim || layer.wq.shape() != [config.embed_dim, config.embed_dim] {
        return Err(DoaError::Dimension(format!("mhsa input {:?} for D = {}", z.shape(), config.embed_dim)));
    }
    let mut tape = Tape::new();
    let vars = LayerParams {
        ln1_gain: tape.leaf(layer.ln1_gain.clone()),
        ln1_bias: tape.leaf(layer.ln1_bias.clone()),
        wq: tape.leaf(layer.wq.clone()),
        wk: tape.leaf(layer.wk.clone()),
        wv: tape.leaf(layer.wv.clone()),
        wo: tape.leaf(layer.wo.clone()),
        ln2_gain: tape.leaf(layer.ln2_gain.clone()),
        ln2_bias: tape.leaf(layer.ln2_bias.clone()),
        w1: tape.leaf(layer.w1.clone()),
        b1: tape.leaf(layer.b1.clone()),
        w2: tape.leaf(layer.w2.clone()),
        b2: tape.leaf(layer.b2.clone()),
    };
    let zv = tape.leaf(z.clone());
    let out = attention(&mut tape, &vars, zv, config, 1)?;
    Ok(tape.value(out).clone())
}

fn run_chunk(config: &ModelConfig, params: &TransDoaParams, scms: &[&CMatrix]) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params);
    let z = encode(&mut tape, &p, config, scms)?;
    let y = head(&mut tape, &p, z)?;
    Ok((tape.value(z).clone(), tape.value(y).clone()))
}

/// Forward pass over many SCMs. Chunks run in parallel; results keep input order.
pub fn forward_batch(config: &ModelConfig, params: &TransDoaParams, scms: &[&CMatrix]) -> Result<Vec<ForwardOutput>> {
    check(config, params)?;
    let chunks: Vec<Result<(Tensor, Tensor)>> =
        scms.par_chunks(INFER_CHUNK).map(|c| run_chunk(config, params, c)).collect();
    let mut out = Vec::with_capacity(scms.len());
    for chunk in chunks {
        let (z, y) = chunk?;
        for r in 0..z.rows() {
            out.push(ForwardOutput {
                features: z.row_slice(r).to_vec(),
                estimate: Estimate::from_head(y.row_slice(r), config.output),
            });
        }
    }
    Ok(out)
}

pub fn forward(config: &ModelConfig, params: &TransDoaParams, scm: &CMatrix) -> Result<ForwardOutput> {
    Ok(forward_batch(config, params, &[scm])?.remove(0))
}

/// Backbone features only (head not applied).
pub fn feature_extract(config: &ModelConfig, params: &TransDoaParams, scm: &CMatrix) -> Result<Vec<f64>> {
    check(config, params)?;
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params);
    let z = encode(&mut tape, &p, config, &[scm])?;
    Ok(tape.value(z).data().to_vec())
}

/// Estimates as labels for a batch of SCMs.
pub fn predict(config: &ModelConfig, params: &TransDoaParams, scms: &[&CMatrix]) -> Result<Vec<DoaLabel>> {
    Ok(forward_batch(config, params, scms)?.into_iter().map(|o| o.estimate.into_label()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::{generate_record, ImperfectionSpec, SignalScenario};
    use crate::array_sim::{ArrayGeometry, DoaSpec, Fov};

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 16, depth: 1, heads: 2, mlp_ratio: 4, sources: 2, elements: 4, output: OutputMode::OneD }
    }

    fn scm(seed: u64) -> CMatrix {
        let g = ArrayGeometry::ula(4, 0.5).unwrap();
        let sc = SignalScenario {
            geometry: g.clone(),
            sources: 2,
            snr_db: 0.0,
            snapshots: 10,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        };
        generate_record(&sc, &ImperfectionSpec::ideal(&g), seed, 0).unwrap().scm
    }

    #[test]
    fn shapes() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 1);
        let r = scm(3);
        assert_eq!(embed_scm(&c, &p, &r).unwrap().shape(), [5, 16]);
        let out = forward(&c, &p, &r).unwrap();
        assert_eq!(out.features.len(), 16);
        assert_eq!(out.estimate.thetas.len(), 2);
        assert!(out.estimate.phis.is_none());
        let c2 = ModelConfig { output: OutputMode::TwoD, ..c };
        let p2 = TransDoaParams::init(&c2, 1);
        let out = forward(&c2, &p2, &r).unwrap();
        assert_eq!(out.estimate.thetas.len(), 2);
        assert_eq!(out.estimate.phis.unwrap().len(), 2);
    }

    #[test]
    fn scale_invariance() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 2);
        let r = scm(4);
        let a = forward(&c, &p, &r).unwrap();
        for s in [0.25, 2.0, 1024.0] {
            let b = forward(&c, &p, &(r.clone() * Complex64::new(s, 0.0))).unwrap();
            assert_eq!(a, b, "scale {s}");
        }
    }

    #[test]
    fn zero_embeddings_leave_only_the_token() {
        let c = tiny();
        let mut p = TransDoaParams::init(&c, 2);
        p.embed = Tensor::zeros(p.embed.shape());
        p.pos_embed = Tensor::zeros(p.pos_embed.shape());
        let z = embed_scm(&c, &p, &scm(1)).unwrap();
        assert_eq!(z.row_slice(0), p.doa_token.data());
        assert!(z.data()[16..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_attention_with_zero_query_key() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 5);
        let mut layer = p.layers[0].clone();
        layer.wq = Tensor::zeros(layer.wq.shape());
        layer.wk = Tensor::zeros(layer.wk.shape());
        let z = embed_scm(&c, &p, &scm(2)).unwrap();
        let out = mhsa(&c, &layer, &z).unwrap();
        // every position sees the mean of V = z·Wvᵀ, then W^O
        let d = 16;
        let mut mean_z = vec![0.0; d];
        for r in 0..5 {
            for (m, v) in mean_z.iter_mut().zip(z.row_slice(r)) {
                *m += v / 5.0;
            }
        }
        let mv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| layer.wv.at(i, j) * mean_z[j]).sum()).collect();
        let expect: Vec<f64> = (0..d).map(|i| (0..d).map(|j| layer.wo.at(i, j) * mv[j]).sum()).collect();
        for r in 0..5 {
            for (a, b) in out.row_slice(r).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 6);
        let z = embed_scm(&c, &p, &scm(5)).unwrap();
        let perm = [0usize, 3, 1, 4, 2];
        let permuted: Vec<f64> = perm.iter().flat_map(|&r| z.row_slice(r).to_vec()).collect();
        let zp = Tensor::matrix(5, 16, permuted).unwrap();
        let a = mhsa(&c, &p.layers[0], &z).unwrap();
        let b = mhsa(&c, &p.layers[0], &zp).unwrap();
        for (i, &r) in perm.iter().enumerate() {
            for (x, y) in a.row_slice(r).iter().zip(b.row_slice(i)) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn features_then_head_reproduce_forward() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 7);
        let r = scm(8);
        let z = feature_extract(&c, &p, &r).unwrap();
        let out = forward(&c, &p, &r).unwrap();
        assert_eq!(z, out.features);
        for k in 0..2 {
            let mut acc = 0.0;
            let mut terms = vec![0.0; 17];
            terms[0] = p.head_b.data()[k];
            for j in 0..16 {
                terms[j + 1] = p.head_w.at(k, j) * z[j];
            }
            for t in terms {
                acc += t;
            }
            assert!((acc - out.estimate.thetas[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn batch_matches_single() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 9);
        let scms: Vec<CMatrix> = (0..70).map(scm).collect();
        let refs: Vec<&CMatrix> = scms.iter().collect();
        let batch = forward_batch(&c, &p, &refs).unwrap();
        for (i, s) in scms.iter().enumerate().step_by(13) {
            let single = forward(&c, &p, s).unwrap();
            for (a, b) in single.features.iter().zip(&batch[i].features) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fresh_model_outputs_near_zero() {
        let c = ModelConfig::desk(8, 3, OutputMode::OneD);
        let p = TransDoaParams::init(&c, 1);
        let g = ArrayGeometry::ula(8, 0.5).unwrap();
        let sc = SignalScenario {
            geometry: g.clone(),
            sources: 3,
            snr_db: 0.0,
            snapshots: 10,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        };
        let r = generate_record(&sc, &ImperfectionSpec::ideal(&g), 1, 0).unwrap().scm;
        let out = forward(&c, &p, &r).unwrap();
        assert!(out.estimate.thetas.iter().all(|t| t.abs() < 1.0), "{:?}", out.estimate.thetas);
    }

    #[test]
    fn wrong_size_is_rejected() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 1);
        let bad = CMatrix::identity(5, 5);
        assert!(matches!(forward(&c, &p, &bad), Err(DoaError::Dimension(_))));
    }
}
