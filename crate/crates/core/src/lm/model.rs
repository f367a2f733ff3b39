//! Forward pass, masked NLL and the matching hand-written backward pass.

use rayon::prelude::*;

use super::tensor::{acc_at_b, add_assign, log_softmax, matmul, matmul_bt, Tensor};
use super::{LmError, ModelState, Params};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// One training sequence. `mask[i]` marks position `i` as predicting
/// `tokens[i + 1]`; the last position never counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub tokens: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TrainExample {
    pub fn full(tokens: Vec<u32>) -> Self {
        let mask = vec![true; tokens.len()];
        Self { tokens, mask }
    }

    pub fn counted_positions(&self) -> usize {
        let n = self.tokens.len();
        self.mask.iter().take(n.saturating_sub(1)).filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `[T, vocab]`, or `[1, vocab]` for the last row only.
    pub logits: Tensor,
    /// `[T, d_model]` after the final layer norm.
    pub hidden: Tensor,
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    hq_down: Vec<f64>,
    hv_down: Vec<f64>,
    probs: Vec<f64>,
    att: Vec<f64>,
    ln2: LnCache,
    h2: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
}

struct Cache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    out: ForwardOutput,
}

/// A forward pass with everything retained for a later backward pass.
pub struct Tape {
    cache: Cache,
}

impl Tape {
    pub fn output(&self) -> &ForwardOutput {
        &self.cache.out
    }

    pub fn tokens(&self) -> &[u32] {
        &self.cache.tokens
    }
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], d: usize) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let xh = (row[j] - mean) * rs;
            xhat[r * d + j] = xh;
            y[r * d + j] = xh * gain[j] + bias[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Accumulates gain/bias gradients and returns the input gradient.
fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    d: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for (r, &rs) in cache.rstd.iter().enumerate() {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            dx[r * d + j] = rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        add_assign(row, bias);
    }
}

fn sum_rows(acc: &mut [f64], x: &[f64]) {
    for row in x.chunks_exact(acc.len()) {
        add_assign(acc, row);
    }
}

impl ModelState {
    pub(crate) fn check_tokens(&self, tokens: &[u32]) -> Result<(), LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySequence);
        }
        if tokens.len() > self.config.max_seq {
            return Err(LmError::SequenceTooLong { len: tokens.len(), max: self.config.max_seq });
        }
        let vocab = self.config.vocab_size;
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= vocab) {
            return Err(LmError::TokenOutOfRange { id, vocab });
        }
        Ok(())
    }

    fn forward_cached(&self, tokens: &[u32], last_only: bool) -> Result<Cache, LmError> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let p = &self.params;
        let (t, d, f, nh, dh) = (tokens.len(), cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = vec![0.0; t * d];
        for (i, &id) in tokens.iter().enumerate() {
            let row = &mut x[i * d..(i + 1) * d];
            row.copy_from_slice(p.tok_emb.row(id as usize));
            add_assign(row, p.pos_emb.row(i));
        }

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for (li, layer) in p.layers.iter().enumerate() {
            let (h, ln1) = layer_norm(&x, &layer.ln1_gain.data, &layer.ln1_bias.data, d);
            let mut q = matmul(&h, &layer.wq.data, t, d, d);
            let k = matmul(&h, &layer.wk.data, t, d, d);
            let mut v = matmul(&h, &layer.wv.data, t, d, d);
            let (mut hq_down, mut hv_down) = (Vec::new(), Vec::new());
            if let Some(lora) = &p.lora {
                let ad = &lora.layers[li];
                let r = lora.rank;
                hq_down = matmul(&h, &ad.q_down.data, t, d, r);
                hv_down = matmul(&h, &ad.v_down.data, t, d, r);
                let dq = matmul(&hq_down, &ad.q_up.data, t, r, d);
                let dv = matmul(&hv_down, &ad.v_up.data, t, r, d);
                for (a, b) in q.iter_mut().zip(dq) {
                    *a += lora.scaling * b;
                }
                for (a, b) in v.iter_mut().zip(dv) {
                    *a += lora.scaling * b;
                }
            }

            // causal multi-head attention; probs laid out [head, i, j]
            let mut probs = vec![0.0; nh * t * t];
            let mut att = vec![0.0; t * d];
            for hd in 0..nh {
                let off = hd * dh;
                for i in 0..t {
                    let qi = &q[i * d + off..i * d + off + dh];
                    let prow = &mut probs[(hd * t + i) * t..(hd * t + i + 1) * t];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let s = scale * qi.iter().zip(&k[j * d + off..j * d + off + dh]).map(|(a, b)| a * b).sum::<f64>();
                        prow[j] = s;
                        max = max.max(s);
                    }
                    let mut z = 0.0;
                    for pj in prow.iter_mut().take(i + 1) {
                        *pj = (*pj - max).exp();
                        z += *pj;
                    }
                    let out = &mut att[i * d + off..i * d + off + dh];
                    for j in 0..=i {
                        prow[j] /= z;
                        let pj = prow[j];
                        for (o, &vv) in out.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                            *o += pj * vv;
                        }
                    }
                }
            }
            let o = matmul(&att, &layer.wo.data, t, d, d);
            add_assign(&mut x, &o);

            let (h2, ln2) = layer_norm(&x, &layer.ln2_gain.data, &layer.ln2_bias.data, d);
            let mut u = matmul(&h2, &layer.ff_in.data, t, d, f);
            add_bias(&mut u, &layer.ff_in_bias.data);
            let act: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
            let mut ff = matmul(&act, &layer.ff_out.data, t, f, d);
            add_bias(&mut ff, &layer.ff_out_bias.data);
            add_assign(&mut x, &ff);

            layers.push(LayerCache { ln1, h, q, k, v, hq_down, hv_down, probs, att, ln2, h2, u, act });
        }

        let (hf, lnf) = layer_norm(&x, &p.lnf_gain.data, &p.lnf_bias.data, d);
        let v = cfg.vocab_size;
        let logits = if last_only {
            Tensor { shape: vec![1, v], data: matmul(&hf[(t - 1) * d..], &p.head.data, 1, d, v) }
        } else {
            Tensor { shape: vec![t, v], data: matmul(&hf, &p.head.data, t, d, v) }
        };
        let out = ForwardOutput { logits, hidden: Tensor { shape: vec![t, d], data: hf } };
        Ok(Cache { tokens: tokens.to_vec(), layers, lnf, out })
    }

    fn backward(&self, cache: &Cache, dlogits: Option<&[f64]>, dhidden: Option<&[f64]>) -> Params {
        let cfg = &self.config;
        let p = &self.params;
        let (t, d, f, nh, dh, vsz) =
            (cache.tokens.len(), cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim(), cfg.vocab_size);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut g = p.zeros_like();
        let hf = &cache.out.hidden.data;

        let mut dhf = vec![0.0; t * d];
        if let Some(dl) = dlogits {
            acc_at_b(&mut g.head.data, hf, dl, t, d, vsz);
            dhf = matmul_bt(dl, &p.head.data, t, vsz, d);
        }
        if let Some(dhid) = dhidden {
            add_assign(&mut dhf, dhid);
        }
        let mut dx = layer_norm_backward(&dhf, &cache.lnf, &p.lnf_gain.data, &mut g.lnf_gain.data, &mut g.lnf_bias.data, d);

        for li in (0..cfg.n_layers).rev() {
            let layer = &p.layers[li];
            let lc = &cache.layers[li];
            let gl = &mut g.layers[li];

            // feed-forward branch
            sum_rows(&mut gl.ff_out_bias.data, &dx);
            acc_at_b(&mut gl.ff_out.data, &lc.act, &dx, t, f, d);
            let mut du = matmul_bt(&dx, &layer.ff_out.data, t, d, f);
            for (a, &z) in du.iter_mut().zip(&lc.u) {
                *a *= gelu_grad(z);
            }
            sum_rows(&mut gl.ff_in_bias.data, &du);
            acc_at_b(&mut gl.ff_in.data, &lc.h2, &du, t, d, f);
            let dh2 = matmul_bt(&du, &layer.ff_in.data, t, f, d);
            let dres = layer_norm_backward(&dh2, &lc.ln2, &layer.ln2_gain.data, &mut gl.ln2_gain.data, &mut gl.ln2_bias.data, d);
            add_assign(&mut dx, &dres);

            // attention branch
            acc_at_b(&mut gl.wo.data, &lc.att, &dx, t, d, d);
            let datt = matmul_bt(&dx, &layer.wo.data, t, d, d);
            let mut dq = vec![0.0; t * d];
            let mut dk = vec![0.0; t * d];
            let mut dv = vec![0.0; t * d];
            let mut dp = vec![0.0; t];
            for hd in 0..nh {
                let off = hd * dh;
                for i in 0..t {
                    let prow = &lc.probs[(hd * t + i) * t..(hd * t + i + 1) * t];
                    let da = &datt[i * d + off..i * d + off + dh];
                    let mut rowdot = 0.0;
                    for j in 0..=i {
                        let vj = &lc.v[j * d + off..j * d + off + dh];
                        dp[j] = da.iter().zip(vj).map(|(a, b)| a * b).sum();
                        rowdot += dp[j] * prow[j];
                        for (dvv, &a) in dv[j * d + off..j * d + off + dh].iter_mut().zip(da) {
                            *dvv += prow[j] * a;
                        }
                    }
                    for j in 0..=i {
                        let ds = prow[j] * (dp[j] - rowdot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh {
                            dq[i * d + off + c] += ds * lc.k[j * d + off + c];
                            dk[j * d + off + c] += ds * lc.q[i * d + off + c];
                        }
                    }
                }
            }
            acc_at_b(&mut gl.wq.data, &lc.h, &dq, t, d, d);
            acc_at_b(&mut gl.wk.data, &lc.h, &dk, t, d, d);
            acc_at_b(&mut gl.wv.data, &lc.h, &dv, t, d, d);
            let mut dh_in = matmul_bt(&dq, &layer.wq.data, t, d, d);
            add_assign(&mut dh_in, &matmul_bt(&dk, &layer.wk.data, t, d, d));
            add_assign(&mut dh_in, &matmul_bt(&dv, &layer.wv.data, t, d, d));
            if let (Some(lora), Some(glora)) = (&p.lora, &mut g.lora) {
                let (ad, gad, r, s) = (&lora.layers[li], &mut glora.layers[li], lora.rank, lora.scaling);
                for (hd_down, up, down, g_up, g_down, dout) in [
                    (&lc.hq_down, &ad.q_up, &ad.q_down, &mut gad.q_up, &mut gad.q_down, &dq),
                    (&lc.hv_down, &ad.v_up, &ad.v_down, &mut gad.v_up, &mut gad.v_down, &dv),
                ] {
                    let scaled: Vec<f64> = dout.iter().map(|x| s * x).collect();
                    acc_at_b(&mut g_up.data, hd_down, &scaled, t, r, d);
                    let dmid = matmul_bt(&scaled, &up.data, t, d, r);
                    acc_at_b(&mut g_down.data, &lc.h, &dmid, t, d, r);
                    add_assign(&mut dh_in, &matmul_bt(&dmid, &down.data, t, r, d));
                }
            }
            let dres = layer_norm_backward(&dh_in, &lc.ln1, &layer.ln1_gain.data, &mut gl.ln1_gain.data, &mut gl.ln1_bias.data, d);
            add_assign(&mut dx, &dres);
        }

        for (i, &id) in cache.tokens.iter().enumerate() {
            let row = &dx[i * d..(i + 1) * d];
            add_assign(&mut g.tok_emb.data[id as usize * d..(id as usize + 1) * d], row);
            add_assign(&mut g.pos_emb.data[i * d..(i + 1) * d], row);
        }

        if g.lora.is_some() {
            for (name, t) in g.named_mut() {
                if !name.starts_with("lora.") {
                    t.data.iter_mut().for_each(|x| *x = 0.0);
                }
            }
        }
        g
    }

    /// Logits and final hidden states for every position.
    pub fn forward(&self, tokens: &[u32]) -> Result<ForwardOutput, LmError> {
        Ok(self.forward_cached(tokens, false)?.out)
    }

    /// Logits for the last position only (a `[vocab]` vector).
    pub fn next_logits(&self, tokens: &[u32]) -> Result<Vec<f64>, LmError> {
        Ok(self.forward_cached(tokens, true)?.out.logits.data)
    }

    /// Forward pass that keeps its intermediates for [`ModelState::backward_tape`].
    pub fn tape(&self, tokens: &[u32]) -> Result<Tape, LmError> {
        Ok(Tape { cache: self.forward_cached(tokens, false)? })
    }

    /// Parameter gradients given gradients with respect to the taped logits
    /// (`[T, vocab]`) and/or final hidden states (`[T, d_model]`).
    pub fn backward_tape(&self, tape: &Tape, dlogits: Option<&[f64]>, dhidden: Option<&[f64]>) -> Params {
        self.backward(&tape.cache, dlogits, dhidden)
    }

    /// Runs forward, lets `objective` turn the outputs into a scalar and its
    /// gradients with respect to logits (`[T, vocab]`) and/or hidden states
    /// (`[T, d_model]`), then backpropagates to parameters.
    pub fn value_and_grad<F>(&self, tokens: &[u32], objective: F) -> Result<(f64, Params), LmError>
    where
        F: FnOnce(&ForwardOutput) -> Result<(f64, Option<Vec<f64>>, Option<Vec<f64>>), LmError>,
    {
        let cache = self.forward_cached(tokens, false)?;
        let (value, dlogits, dhidden) = objective(&cache.out)?;
        let g = self.backward(&cache, dlogits.as_deref(), dhidden.as_deref());
        Ok((value, g))
    }

    /// Mean masked next-token negative log-likelihood of one sequence.
    pub fn nll_loss(&self, tokens: &[u32], mask: &[bool]) -> Result<f64, LmError> {
        let out = self.forward(tokens)?;
        Ok(masked_nll(&out.logits, tokens, mask, false)?.0)
    }

    /// Per-position log-probability of each next token, `[T - 1]`.
    pub fn token_logprobs(&self, tokens: &[u32]) -> Result<Vec<f64>, LmError> {
        let out = self.forward(tokens)?;
        let v = self.config.vocab_size;
        Ok((0..tokens.len() - 1)
            .map(|i| log_softmax(&out.logits.data[i * v..(i + 1) * v])[tokens[i + 1] as usize])
            .collect())
    }

    fn example_loss_grad(&self, ex: &TrainExample) -> Result<(f64, Params), LmError> {
        self.value_and_grad(&ex.tokens, |out| {
            let (loss, dl) = masked_nll(&out.logits, &ex.tokens, &ex.mask, true)?;
            Ok((loss, dl, None))
        })
    }

    /// Mean over the batch of per-sequence masked NLL, with its exact
    /// gradient. Examples are evaluated in parallel and reduced in order.
    pub fn loss_and_grad(&self, batch: &[TrainExample]) -> Result<(f64, Params), LmError> {
        if batch.is_empty() {
            return Err(LmError::EmptyBatch);
        }
        let parts: Vec<Result<(f64, Params), LmError>> =
            batch.par_iter().map(|ex| self.example_loss_grad(ex)).collect();
        let inv = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grad = self.params.zeros_like();
        for part in parts {
            let (l, g) = part?;
            total += l;
            grad.add_scaled(&g, inv);
        }
        Ok((total * inv, grad))
    }

    pub fn grad(&self, batch: &[TrainExample]) -> Result<Params, LmError> {
        Ok(self.loss_and_grad(batch)?.1)
    }

    pub fn batch_loss(&self, batch: &[TrainExample]) -> Result<f64, LmError> {
        if batch.is_empty() {
            return Err(LmError::EmptyBatch);
        }
        let losses: Vec<Result<f64, LmError>> =
            batch.par_iter().map(|ex| self.nll_loss(&ex.tokens, &ex.mask)).collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / batch.len() as f64)
    }
}

/// Masked mean NLL from a full logits matrix; optionally also `dL/dlogits`.
pub(crate) fn masked_nll(
    logits: &Tensor,
    tokens: &[u32],
    mask: &[bool],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>), LmError> {
    let v = logits.shape[1];
    let t = tokens.len();
    let positions: Vec<usize> = (0..t.saturating_sub(1)).filter(|&i| mask.get(i).copied().unwrap_or(false)).collect();
    if positions.is_empty() {
        return Err(LmError::EmptyMask);
    }
    let inv = 1.0 / positions.len() as f64;
    let mut loss = 0.0;
    let mut dl = want_grad.then(|| vec![0.0; t * v]);
    for &i in &positions {
        let lp = log_softmax(&logits.data[i * v..(i + 1) * v]);
        let target = tokens[i + 1] as usize;
        loss -= lp[target];
        if let Some(dl) = dl.as_mut() {
            let row = &mut dl[i * v..(i + 1) * v];
            for (r, &l) in row.iter_mut().zip(&lp) {
                *r = l.exp() * inv;
            }
            row[target] -= inv;
        }
    }
    Ok((loss * inv, dl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};
    use rand::Rng;

    fn tiny() -> ModelState {
        init_model(ModelConfig { vocab_size: 20, d_model: 8, n_heads: 2, n_layers: 2, d_ff: 16, max_seq: 12, seed: 11 })
            .unwrap()
    }

    #[test]
    fn shapes_and_normalization() {
        let m = tiny();
        let out = m.forward(&[3]).unwrap();
        assert_eq!(out.logits.shape, vec![1, 20]);
        let out = m.forward(&[1, 5, 7, 2]).unwrap();
        for r in 0..4 {
            let s: f64 = crate::lm::tensor::softmax(out.logits.row(r)).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        let last = m.next_logits(&[1, 5, 7, 2]).unwrap();
        assert_eq!(last.as_slice(), out.logits.row(3));
    }

    #[test]
    fn causal() {
        let m = tiny();
        let a = m.forward(&[1, 5, 7, 2, 9]).unwrap();
        let b = m.forward(&[1, 5, 7, 13, 4]).unwrap();
        for r in 0..3 {
            assert_eq!(a.logits.row(r), b.logits.row(r));
        }
        let c = m.forward(&[1, 5, 7]).unwrap();
        assert_eq!(c.logits.row(2), a.logits.row(2));
    }

    #[test]
    fn rejects_overlong_and_empty_mask() {
        let m = tiny();
        assert!(matches!(m.forward(&[1; 13]), Err(LmError::SequenceTooLong { len: 13, max: 12 })));
        assert!(matches!(m.nll_loss(&[1, 2, 3], &[false, false, true]), Err(LmError::EmptyMask)));
    }

    #[test]
    fn nll_matches_scalar_recomputation() {
        let m = tiny();
        let toks = [1u32, 4, 9, 9, 2];
        let out = m.forward(&toks).unwrap();
        let mut total = 0.0;
        for i in 0..4 {
            let row = out.logits.row(i);
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            total += -(row[toks[i + 1] as usize].exp() / z).ln();
        }
        let loss = m.nll_loss(&toks, &[true; 5]).unwrap();
        assert!((loss - total / 4.0).abs() < 1e-9);
    }

    #[test]
    fn unused_embedding_rows_have_zero_grad() {
        let m = tiny();
        let g = m.grad(&[TrainExample::full(vec![1, 4, 9, 2])]).unwrap();
        for id in [0usize, 3, 19] {
            assert!(g.tok_emb.row(id).iter().all(|&x| x == 0.0));
        }
        assert!(g.tok_emb.row(4).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn duplicated_batch_same_mean_grad() {
        let m = tiny();
        let a = TrainExample::full(vec![1, 4, 9, 2]);
        let b = TrainExample { tokens: vec![1, 6, 6, 7, 2], mask: vec![false, true, true, true, false] };
        let g1 = m.grad(&[a.clone(), b.clone()]).unwrap();
        let g2 = m.grad(&[a.clone(), b.clone(), a, b]).unwrap();
        for ((_, x), (_, y)) in g1.named().into_iter().zip(g2.named()) {
            for (p, q) in x.data.iter().zip(&y.data) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn finite_difference_spot_check() {
        let mut m = tiny().attach_lora(2, 0.5).unwrap();
        // move the adapter away from its zero-product starting point
        let mut rng = crate::seed::rng_from_seed(5);
        for (_, t) in m.params.named_mut() {
            for x in t.data.iter_mut() {
                *x += rng.gen_range(-0.05..0.05);
            }
        }
        let ex = TrainExample { tokens: vec![1, 4, 9, 9, 2, 7], mask: vec![true, false, true, true, true, true] };
        let (_, g) = m.loss_and_grad(std::slice::from_ref(&ex)).unwrap();
        let h = 1e-5;
        let names: Vec<String> = m.params.named().into_iter().map(|(n, _)| n).collect();
        for (ti, name) in names.iter().enumerate() {
            if !name.starts_with("lora.") {
                continue;
            }
            let len = m.params.named()[ti].1.len();
            for idx in [0, len / 2, len - 1] {
                let mut plus = m.clone();
                plus.params.named_mut()[ti].1.data[idx] += h;
                let mut minus = m.clone();
                minus.params.named_mut()[ti].1.data[idx] -= h;
                let fd = (plus.nll_loss(&ex.tokens, &ex.mask).unwrap() - minus.nll_loss(&ex.tokens, &ex.mask).unwrap())
                    / (2.0 * h);
                let an = g.named()[ti].1.data[idx];
                assert!((fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()), "{name}[{idx}]: fd {fd} an {an}");
            }
        }
        assert!(g.layers[0].wq.data.iter().all(|&x| x == 0.0));
    }
}
