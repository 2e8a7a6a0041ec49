use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Init, LayerNorm, Linear};
use crate::tensor::{Bound, ParamId, ParamSet, Scalar, Tape, Tensor, Var};

/// Half-width of the uniform init of the gMLP token-mixing matrix.
const GATE_INIT: f64 = 1e-3;

/// Pre-norm multi-head self-attention followed by a pre-norm LeakyReLU FFN,
/// each with a residual connection.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm2: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub heads: usize,
    pub slope: f64,
}

impl AttentionBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, d: usize, heads: usize, slope: f64, rng: &mut R) -> Self {
        assert!(heads >= 1 && d.is_multiple_of(heads));
        AttentionBlock {
            norm1: LayerNorm::new(params, &format!("{name}.norm1"), d),
            query: Linear::new(params, &format!("{name}.query"), d, d, Init::Linear, rng),
            key: Linear::new(params, &format!("{name}.key"), d, d, Init::Linear, rng),
            value: Linear::new(params, &format!("{name}.value"), d, d, Init::Linear, rng),
            output: Linear::new(params, &format!("{name}.output"), d, d, Init::Linear, rng),
            norm2: LayerNorm::new(params, &format!("{name}.norm2"), d),
            ff_in: Linear::new(params, &format!("{name}.ff_in"), d, 4 * d, Init::Activated, rng),
            ff_out: Linear::new(params, &format!("{name}.ff_out"), 4 * d, d, Init::Linear, rng),
            heads,
            slope,
        }
    }

    /// Multi-head attention over the rows of `x` (no norm, no residual).
    /// Each head's `n×n` weight matrix is pushed onto `weights`.
    pub fn attend<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, weights: &mut Vec<Var>) -> Result<Var> {
        let d = tape.shape(x)[1];
        let dh = d / self.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let q = self.query.forward(tape, p, x)?;
        let k = self.key.forward(tape, p, x)?;
        let v = self.value.forward(tape, p, x)?;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let s = tape.matmul(qh, kt)?;
            let s = tape.scale(s, scale)?;
            let a = tape.softmax(s, 1)?;
            weights.push(a);
            outs.push(tape.matmul(a, vh)?);
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        self.output.forward(tape, p, cat)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, weights: &mut Vec<Var>) -> Result<Var> {
        let y = self.norm1.forward(tape, p, x)?;
        let y = self.attend(tape, p, y, weights)?;
        let x = tape.add(x, y)?;
        let y = self.norm2.forward(tape, p, x)?;
        let y = self.ff_in.forward(tape, p, y)?;
        let y = tape.leaky_relu(y, T::of(self.slope))?;
        let y = self.ff_out.forward(tape, p, y)?;
        tape.add(x, y)
    }
}

/// gMLP block: channel expansion, spatial gating over a fixed number of
/// tokens, projection back, residual.
#[derive(Clone, Debug)]
pub struct GmlpBlock {
    pub norm: LayerNorm,
    pub expand: Linear,
    /// `n×n` token-mixing matrix.
    pub mix: ParamId,
    /// Per-token gate bias, initialized to 1.
    pub gate_bias: ParamId,
    pub project: Linear,
    pub tokens: usize,
    pub slope: f64,
}

impl GmlpBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, d: usize, tokens: usize, slope: f64, rng: &mut R) -> Self {
        let mix = Tensor::from_fn([tokens, tokens], |_| T::of(rng.random_range(-GATE_INIT..=GATE_INIT)));
        GmlpBlock {
            norm: LayerNorm::new(params, &format!("{name}.norm"), d),
            expand: Linear::new(params, &format!("{name}.expand"), d, 4 * d, Init::Activated, rng),
            mix: params.add(format!("{name}.mix"), mix),
            gate_bias: params.add(format!("{name}.gate_bias"), Tensor::full([tokens], T::one())),
            project: Linear::new(params, &format!("{name}.project"), 2 * d, d, Init::Linear, rng),
            tokens,
            slope,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let (n, d) = (tape.shape(x)[0], tape.shape(x)[1]);
        if n != self.tokens {
            return Err(Error::Dimension(format!(
                "gMLP block built for {} tokens received {n}",
                self.tokens
            )));
        }
        let y = self.norm.forward(tape, p, x)?;
        let y = self.expand.forward(tape, p, y)?;
        let y = tape.leaky_relu(y, T::of(self.slope))?;
        let u = tape.slice_cols(y, 0, 2 * d)?;
        let v = tape.slice_cols(y, 2 * d, 2 * d)?;
        let g = tape.matmul(p[self.mix], v)?;
        let g = tape.add_col_bias(g, p[self.gate_bias])?;
        let z = tape.mul(u, g)?;
        let z = self.project.forward(tape, p, z)?;
        tape.add(x, z)
    }
}

#[derive(Clone, Debug)]
pub enum Block {
    Attention(AttentionBlock),
    Gmlp(GmlpBlock),
}

impl Block {
    /// `heads = 0` selects gMLP, which needs the token count up front.
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, d: usize, heads: usize, tokens: usize, slope: f64, rng: &mut R) -> Self {
        if heads == 0 {
            Block::Gmlp(GmlpBlock::new(params, name, d, tokens, slope, rng))
        } else {
            Block::Attention(AttentionBlock::new(params, name, d, heads, slope, rng))
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, weights: &mut Vec<Var>) -> Result<Var> {
        match self {
            Block::Attention(b) => b.forward(tape, p, x, weights),
            Block::Gmlp(b) => b.forward(tape, p, x),
        }
    }
}

/// A stack of blocks whose output tokens are mean-pooled to one row.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub blocks: Vec<Block>,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, d: usize, heads: usize, depth: usize, tokens: usize, slope: f64, rng: &mut R) -> Self {
        Encoder {
            blocks: (0..depth)
                .map(|i| Block::new(params, &format!("{name}.{i}"), d, heads, tokens, slope, rng))
                .collect(),
        }
    }

    /// `[n×d]` tokens to a `[1×d]` pooled vector.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, mut x: Var, weights: &mut Vec<Var>) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(tape, p, x, weights)?;
        }
        tape.mean_rows(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tokens(tape: &mut Tape<f64>, n: usize, d: usize, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        tape.constant(Tensor::from_fn([n, d], |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn zero_query_key_gives_mean_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::<f64>::new();
        let b = AttentionBlock::new(&mut params, "b", 4, 1, 0.01, &mut rng);
        for id in [b.query.weight, b.key.weight] {
            params.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let p = params.bind(&mut tape).unwrap();
        let x = tokens(&mut tape, 5, 4, 9);
        let mut w = Vec::new();
        let out = b.attend(&mut tape, &p, x, &mut w).unwrap();
        for &v in tape.value(w[0]) {
            assert!((v - 0.2).abs() < 1e-15);
        }
        // Uniform weights: every row is the mean value row, projected.
        let vrows = b.value.forward(&mut tape, &p, x).unwrap();
        let mean = tape.mean_rows(vrows).unwrap();
        let expect = b.output.forward(&mut tape, &p, mean).unwrap();
        let (out, expect) = (tape.value(out).to_vec(), tape.value(expect).to_vec());
        for r in 0..5 {
            for j in 0..4 {
                assert!((out[r * 4 + j] - expect[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParamSet::<f64>::new();
        let b = AttentionBlock::new(&mut params, "b", 8, 2, 0.01, &mut rng);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape).unwrap();
        let x = tokens(&mut tape, 6, 8, 1);
        let mut w = Vec::new();
        b.forward(&mut tape, &p, x, &mut w).unwrap();
        assert_eq!(w.len(), 2);
        for a in w {
            for row in tape.value(a).chunks(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_gate_is_per_token_ffn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::<f64>::new();
        let b = GmlpBlock::new(&mut params, "g", 4, 3, 0.01, &mut rng);
        params.get_mut(b.mix).data_mut().fill(0.0);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape).unwrap();
        let x = tokens(&mut tape, 3, 4, 2);
        let out = b.forward(&mut tape, &p, x).unwrap();
        // Each row only depends on its own token: recompute row 1 alone.
        let x_all = tape.value(x).to_vec();
        let mut p2 = params.clone();
        let single = GmlpBlock {
            tokens: 1,
            mix: p2.add("m1", Tensor::zeros([1, 1])),
            gate_bias: p2.add("b1", Tensor::full([1], 1.0)),
            ..b.clone()
        };
        let mut t2 = Tape::new();
        let q = p2.bind(&mut t2).unwrap();
        let row = t2.constant(Tensor::new([1, 4], x_all[4..8].to_vec()).unwrap()).unwrap();
        let r = single.forward(&mut t2, &q, row).unwrap();
        for j in 0..4 {
            assert!((tape.value(out)[4 + j] - t2.value(r)[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gmlp_rejects_wrong_token_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = ParamSet::<f64>::new();
        let b = GmlpBlock::new(&mut params, "g", 4, 3, 0.01, &mut rng);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape).unwrap();
        let x = tokens(&mut tape, 5, 4, 2);
        assert!(matches!(b.forward(&mut tape, &p, x), Err(Error::Dimension(_))));
    }

    #[test]
    fn empty_encoder_is_mean() {
        let mut params = ParamSet::<f64>::new();
        let e = Encoder::new(&mut params, "e", 4, 0, 0, 3, 0.01, &mut ChaCha8Rng::seed_from_u64(0));
        let mut tape = Tape::new();
        let p = params.bind(&mut tape).unwrap();
        let x = tokens(&mut tape, 3, 4, 7);
        let out = e.forward(&mut tape, &p, x, &mut Vec::new()).unwrap();
        let xs = tape.value(x).to_vec();
        for j in 0..4 {
            let m = (xs[j] + xs[4 + j] + xs[8 + j]) / 3.0;
            assert!((tape.value(out)[j] - m).abs() < 1e-15);
        }
    }
}
