//! Single-layer bidirectional LSTM built from tape primitives.

use super::tape::{AdError, Tensor};

/// Weights for one LSTM direction. Gate order along the 4H axis is
/// input, forget, cell, output.
pub struct LstmDirWeights<'a> {
    /// [4H, E]
    pub w_ih: &'a Tensor,
    /// [4H, H]
    pub w_hh: &'a Tensor,
    /// [4H]
    pub b: &'a Tensor,
}

fn run_direction(
    steps: &[Tensor],
    weights: &LstmDirWeights,
    hidden: usize,
) -> Vec<Tensor> {
    let mut h = steps[0].make(vec![hidden], vec![0.0; hidden], false, None);
    let mut c = h.clone();
    let mut states = Vec::with_capacity(steps.len());
    for x in steps {
        let gates = x.linear(weights.w_ih, Some(weights.b)).add(&h.linear(weights.w_hh, None));
        let i = gates.narrow(0, 0, hidden).sigmoid();
        let f = gates.narrow(0, hidden, hidden).sigmoid();
        let g = gates.narrow(0, 2 * hidden, hidden).tanh();
        let o = gates.narrow(0, 3 * hidden, hidden).sigmoid();
        c = i.mul(&g).add(&f.mul(&c));
        h = o.mul(&c.tanh());
        states.push(h.clone());
    }
    states
}

/// Encode `embeddings` [T,E] into per-step states [T,2H] and a summary
/// [2H] concatenating the forward direction's final hidden state with
/// the backward direction's final hidden state.
pub fn bilstm_encode(
    embeddings: &Tensor,
    forward: &LstmDirWeights,
    backward: &LstmDirWeights,
    hidden: usize,
) -> Result<(Tensor, Tensor), AdError> {
    let shape = embeddings.shape();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(AdError::RejectedInput(format!(
            "bilstm_encode expects a non-empty [T,E] sequence, got {shape:?}"
        )));
    }
    let (t_len, e) = (shape[0], shape[1]);
    let steps: Vec<Tensor> =
        (0..t_len).map(|t| embeddings.narrow(0, t, 1).reshape(&[e])).collect();
    let fwd_states = run_direction(&steps, forward, hidden);
    let rev: Vec<Tensor> = steps.iter().rev().cloned().collect();
    let bwd_states_rev = run_direction(&rev, backward, hidden);
    // bwd_states_rev[i] is the state after consuming original step T-1-i
    let bwd_at: Vec<&Tensor> =
        (0..t_len).map(|t| &bwd_states_rev[t_len - 1 - t]).collect();

    let rows: Vec<Tensor> = (0..t_len)
        .map(|t| Tensor::concat(&[&fwd_states[t], bwd_at[t]], 0).reshape(&[1, 2 * hidden]))
        .collect();
    let row_refs: Vec<&Tensor> = rows.iter().collect();
    let states = Tensor::concat(&row_refs, 0);
    let summary = Tensor::concat(&[&fwd_states[t_len - 1], &bwd_states_rev[t_len - 1]], 0);
    Ok((states, summary))
}
