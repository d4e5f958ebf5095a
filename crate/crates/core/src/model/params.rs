use rand::Rng;
use rand_distr::Normal;

use super::ModelConfig;
use crate::autodiff::Tensor;
use crate::rng;

/// One encoder block. Projection weights are stored `out × in`; the
/// query/key/value matrices stack the heads along their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Full parameter set. The positional embeddings are stored one row per
/// sequence position, `(M+1) × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<T> {
    pub embed: T,
    pub doa_token: T,
    pub pos_embed: T,
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: T,
    pub final_bias: T,
    pub head_w: T,
    pub head_b: T,
}

pub type TransDoaParams = Net<Tensor>;

impl<T> LayerParams<T> {
    fn fields(&self) -> [(&'static str, &T); 12] {
        [
            ("ln1.gain", &self.ln1_gain),
            ("ln1.bias", &self.ln1_bias),
            ("attn.wq", &self.wq),
            ("attn.wk", &self.wk),
            ("attn.wv", &self.wv),
            ("attn.wo", &self.wo),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.bias", &self.ln2_bias),
            ("mlp.w1", &self.w1),
            ("mlp.b1", &self.b1),
            ("mlp.w2", &self.w2),
            ("mlp.b2", &self.b2),
        ]
    }

    fn fields_mut(&mut self) -> [&mut T; 12] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    fn from_iter(it: &mut impl Iterator<Item = T>) -> Option<Self> {
        Some(LayerParams {
            ln1_gain: it.next()?,
            ln1_bias: it.next()?,
            wq: it.next()?,
            wk: it.next()?,
            wv: it.next()?,
            wo: it.next()?,
            ln2_gain: it.next()?,
            ln2_bias: it.next()?,
            w1: it.next()?,
            b1: it.next()?,
            w2: it.next()?,
            b2: it.next()?,
        })
    }
}

impl<T> Net<T> {
    /// Every tensor with its canonical name, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![
            ("embed".to_string(), &self.embed),
            ("doa_token".to_string(), &self.doa_token),
            ("pos_embed".to_string(), &self.pos_embed),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(layer.fields().into_iter().map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("final_ln.gain".to_string(), &self.final_gain));
        out.push(("final_ln.bias".to_string(), &self.final_bias));
        out.push(("head.weight".to_string(), &self.head_w));
        out.push(("head.bias".to_string(), &self.head_b));
        out
    }

    /// Mutable references in the order of [`Net::named`].
    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.embed, &mut self.doa_token, &mut self.pos_embed];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        out.extend([&mut self.final_gain, &mut self.final_bias, &mut self.head_w, &mut self.head_b]);
        out
    }

    pub fn values(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// Rebuilds a net with `depth` layers from values in canonical order.
    pub fn from_values(depth: usize, values: impl IntoIterator<Item = T>) -> Option<Self> {
        let mut it = values.into_iter();
        let embed = it.next()?;
        let doa_token = it.next()?;
        let pos_embed = it.next()?;
        let layers = (0..depth).map(|_| LayerParams::from_iter(&mut it)).collect::<Option<Vec<_>>>()?;
        let net = Net {
            embed,
            doa_token,
            pos_embed,
            layers,
            final_gain: it.next()?,
            final_bias: it.next()?,
            head_w: it.next()?,
            head_b: it.next()?,
        };
        it.next().is_none().then_some(net)
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Net<U> {
        Net::from_values(self.layers.len(), self.values().into_iter().map(&mut f)).expect("same layout")
    }
}

impl TransDoaParams {
    /// Seeded initialization: weights, biases, token and positional
    /// embeddings i.i.d. N(0, 0.02²); layer-norm gains 1 and biases 0.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng::stream(seed, 7);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut randn = |r: usize, c: usize| {
            let data = (0..r * c).map(|_| rng.sample(normal)).collect();
            Tensor::matrix(r, c, data).unwrap()
        };
        let d = config.embed_dim;
        let hidden = config.mlp_ratio * d;
        let ones = || Tensor::row(vec![1.0; d]);
        let zeros = || Tensor::row(vec![0.0; d]);

        let embed = randn(d, 2 * config.elements);
        let doa_token = randn(1, d);
        let pos_embed = randn(config.seq_len(), d);
        let layers = (0..config.depth)
            .map(|_| LayerParams {
                ln1_gain: ones(),
                ln1_bias: zeros(),
                wq: randn(d, d),
                wk: randn(d, d),
                wv: randn(d, d),
                wo: randn(d, d),
                ln2_gain: ones(),
                ln2_bias: zeros(),
                w1: randn(hidden, d),
                b1: randn(1, hidden),
                w2: randn(d, hidden),
                b2: randn(1, d),
            })
            .collect();
        let head_w = randn(config.outputs(), d);
        let head_b = randn(1, config.outputs());
        Net { embed, doa_token, pos_embed, layers, final_gain: ones(), final_bias: zeros(), head_w, head_b }
    }

    pub fn param_count(&self) -> usize {
        self.values().iter().map(|t| t.len()).sum()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let (a, b) = (self.values(), other.values());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.bitwise_eq(y))
    }

    /// Shape check against a config.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let fresh = TransDoaParams::init(config, 0);
        let (a, b) = (self.values(), fresh.values());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OutputMode;

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 16, depth: 1, heads: 2, mlp_ratio: 4, sources: 2, elements: 4, output: OutputMode::OneD }
    }

    #[test]
    fn hand_count_for_tiny_config() {
        // embed 16·8 + token 16 + pos 16·5
        // + layer: 4·16·16 + 2·2·16 (ln) + 64·16 + 64 + 16·64 + 16
        // + final ln 2·16 + head 2·16 + 2
        let hand = 128 + 16 + 80 + (1024 + 64 + 1024 + 64 + 1024 + 16) + 32 + 34;
        assert_eq!(hand, 3506);
        assert_eq!(tiny().param_count(), hand);
        assert_eq!(TransDoaParams::init(&tiny(), 1).param_count(), hand);
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let p = TransDoaParams::init(&tiny(), 1);
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert_eq!(names[0], "embed");
        assert_eq!(names.last().unwrap(), "head.bias");
        let idx = p.map(|_| ());
        assert_eq!(idx.values().len(), names.len());
    }

    #[test]
    fn seeded_init() {
        let a = TransDoaParams::init(&tiny(), 5);
        assert!(a.bitwise_eq(&TransDoaParams::init(&tiny(), 5)));
        assert!(!a.bitwise_eq(&TransDoaParams::init(&tiny(), 6)));
        assert!(a.matches(&tiny()));
        let mut other = tiny();
        other.elements = 5;
        assert!(!a.matches(&other));
    }

    #[test]
    fn values_mut_follows_named_order() {
        let mut p = TransDoaParams::init(&tiny(), 2);
        let shapes: Vec<Vec<usize>> = p.values().iter().map(|t| t.shape().to_vec()).collect();
        let mut_shapes: Vec<Vec<usize>> = p.values_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mut_shapes);
    }
}
