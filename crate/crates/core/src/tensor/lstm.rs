use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM cell. Gate rows are stacked input, forget, cell,
/// output: `w_ih [4H, I]`, `w_hh [4H, H]`, `bias [4H]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

impl Graph {
    /// One LSTM step. `x [B, I]`, `h_prev [B, H]`, `c_prev [B, H]`; returns `(h, c)`.
    pub fn lstm_cell(
        &mut self,
        x: Var,
        h_prev: Var,
        c_prev: Var,
        weights: &LstmWeights,
    ) -> Result<(Var, Var)> {
        let hs = self.shape(h_prev).to_vec();
        if hs.len() != 2 || self.shape(c_prev) != hs.as_slice() {
            return Err(Error::Shape(format!(
                "lstm_cell: h {:?} and c {:?} must both be [B, H]",
                hs,
                self.shape(c_prev)
            )));
        }
        let hidden = hs[1];
        let w_hh = self.shape(weights.w_hh);
        if w_hh != [4 * hidden, hidden] || self.shape(weights.bias) != [4 * hidden] {
            return Err(Error::Shape(format!(
                "lstm_cell: hidden size {hidden} but w_hh {:?}, bias {:?}",
                w_hh,
                self.shape(weights.bias)
            )));
        }
        if self.shape(weights.w_ih).first() != Some(&(4 * hidden)) {
            return Err(Error::Shape(format!(
                "lstm_cell: w_ih {:?} must have {} rows",
                self.shape(weights.w_ih),
                4 * hidden
            )));
        }

        let zero_bias = self.constant(Tensor::zeros([4 * hidden]));
        let from_input = self.linear(x, weights.w_ih, weights.bias)?;
        let from_hidden = self.linear(h_prev, weights.w_hh, zero_bias)?;
        let gates = self.add(from_input, from_hidden)?;

        let i = self.narrow(gates, 1, 0, hidden)?;
        let f = self.narrow(gates, 1, hidden, hidden)?;
        let g = self.narrow(gates, 1, 2 * hidden, hidden)?;
        let o = self.narrow(gates, 1, 3 * hidden, hidden)?;
        let i = self.sigmoid(i)?;
        let f = self.sigmoid(f)?;
        let g = self.tanh(g)?;
        let o = self.sigmoid(o)?;

        let keep = self.mul(f, c_prev)?;
        let write = self.mul(i, g)?;
        let c = self.add(keep, write)?;
        let c_act = self.tanh(c)?;
        let h = self.mul(o, c_act)?;
        Ok((h, c))
    }
}
