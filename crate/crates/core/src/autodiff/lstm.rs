use super::tape::{Tape, Var};
use super::tensor::Real;
use crate::{Error, Result};

/// Weights of one LSTM layer already recorded on a tape.
///
/// Gate blocks are packed along the output axis in the order input, forget,
/// cell, output: `w_ih: [I, 4H]`, `w_hh: [H, 4H]`, `bias: [4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmLayer {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// Hidden states of the last layer, `[B, T, H]`.
    pub outputs: Var,
    /// `(h, c)` after the final step, one pair per layer.
    pub final_states: Vec<(Var, Var)>,
}

/// Runs a stacked LSTM over `x: [B, T, I]` from a zero initial state.
pub fn lstm_forward<T: Real>(tape: &mut Tape<T>, x: Var, layers: &[LstmLayer]) -> Result<LstmOutput> {
    if layers.is_empty() {
        return Err(Error::Shape("lstm needs at least one layer".into()));
    }
    let mut input = x;
    let mut final_states = Vec::with_capacity(layers.len());
    for layer in layers {
        let (seq, state) = lstm_layer(tape, input, layer)?;
        input = seq;
        final_states.push(state);
    }
    Ok(LstmOutput {
        outputs: input,
        final_states,
    })
}

fn lstm_layer<T: Real>(tape: &mut Tape<T>, x: Var, layer: &LstmLayer) -> Result<(Var, (Var, Var))> {
    let sx = tape.shape(x).to_vec();
    let (si, sh, sb) = (
        tape.shape(layer.w_ih).to_vec(),
        tape.shape(layer.w_hh).to_vec(),
        tape.shape(layer.bias).to_vec(),
    );
    if sx.len() != 3 || sh.len() != 2 || sh[1] != 4 * sh[0] || si.len() != 2 || si[0] != sx[2]
        || si[1] != sh[1] || sb != [sh[1]]
    {
        return Err(Error::Shape(format!(
            "lstm: input {sx:?} with w_ih {si:?}, w_hh {sh:?}, bias {sb:?}"
        )));
    }
    let (bs, t, i) = (sx[0], sx[1], sx[2]);
    let h = sh[0];

    // Input projections for every step at once.
    let flat = tape.reshape(x, vec![bs * t, i])?;
    let proj = tape.matmul(flat, layer.w_ih)?;
    let proj = tape.add_bias(proj, layer.bias)?;
    let proj = tape.reshape(proj, vec![bs, t, 4 * h])?;

    let mut h_prev = tape.constant(vec![bs, h], vec![T::zero(); bs * h])?;
    let mut c_prev = h_prev;
    let mut steps = Vec::with_capacity(t);
    for step in 0..t {
        let xp = tape.time_step(proj, step)?;
        let hp = tape.matmul(h_prev, layer.w_hh)?;
        let gates = tape.add(xp, hp)?;
        let ig = tape.slice_cols(gates, 0, h)?;
        let fg = tape.slice_cols(gates, h, h)?;
        let gg = tape.slice_cols(gates, 2 * h, h)?;
        let og = tape.slice_cols(gates, 3 * h, h)?;
        let ig = tape.sigmoid(ig);
        let fg = tape.sigmoid(fg);
        let gg = tape.tanh(gg);
        let og = tape.sigmoid(og);
        let keep = tape.mul(fg, c_prev)?;
        let write = tape.mul(ig, gg)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let hn = tape.mul(og, tc)?;
        steps.push(hn);
        h_prev = hn;
        c_prev = c;
    }
    let seq = tape.stack_time(&steps)?;
    Ok((seq, (h_prev, c_prev)))
}
