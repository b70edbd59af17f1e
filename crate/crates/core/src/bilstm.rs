//! Bidirectional LSTM over per-token input vectors. Standard LSTM with a
//! forget gate, no peepholes; both directions start from zero state and the
//! per-position outputs are concatenated (forward, backward).

use rand::Rng;

use crate::autodiff::{Param, Tape, Tensor, Var};
use crate::rng::substream;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

const GATES: [(Gate, &str); 4] = [
    (Gate::Input, "i"),
    (Gate::Forget, "f"),
    (Gate::Output, "o"),
    (Gate::Candidate, "g"),
];

#[derive(Clone)]
pub struct GateParams {
    pub w: Param, // [H x D_in]
    pub u: Param, // [H x H]
    pub b: Param, // [H]
}

#[derive(Clone)]
pub struct LstmCellParams {
    pub gates: Vec<GateParams>, // ordered as GATES
    pub hidden: usize,
    pub input_dim: usize,
}

impl LstmCellParams {
    /// Weights uniform in ±sqrt(6/(D_in+H)); forget-gate bias 1.0, others 0.
    pub fn init(name_prefix: &str, input_dim: usize, hidden: usize, seed: u64) -> Self {
        let bound = (6.0 / (input_dim + hidden) as f64).sqrt();
        let gates = GATES
            .iter()
            .map(|(gate, tag)| {
                let mut rng = substream(seed, &format!("init.{name_prefix}.{tag}"));
                let w_data = (0..hidden * input_dim)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                let u_data = (0..hidden * hidden)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                let bias = if *gate == Gate::Forget { 1.0 } else { 0.0 };
                GateParams {
                    w: Param::new(
                        format!("{name_prefix}.{tag}.w"),
                        Tensor::matrix(hidden, input_dim, w_data),
                    ),
                    u: Param::new(
                        format!("{name_prefix}.{tag}.u"),
                        Tensor::matrix(hidden, hidden, u_data),
                    ),
                    b: Param::new(
                        format!("{name_prefix}.{tag}.b"),
                        Tensor::vector(vec![bias; hidden]),
                    ),
                }
            })
            .collect();
        LstmCellParams {
            gates,
            hidden,
            input_dim,
        }
    }

    pub fn params(&self) -> Vec<Param> {
        self.gates
            .iter()
            .flat_map(|g| [g.w.clone(), g.u.clone(), g.b.clone()])
            .collect()
    }

    fn gate_pre(&self, tape: &mut Tape, idx: usize, x: Var, h_prev: Var) -> Var {
        let g = &self.gates[idx];
        let w = tape.leaf(&g.w);
        let u = tape.leaf(&g.u);
        let b = tape.leaf(&g.b);
        let wx = tape.matvec(w, x);
        let uh = tape.matvec(u, h_prev);
        let s = tape.add(wx, uh);
        tape.add(s, b)
    }
}

/// One LSTM step: i,f,o = sigmoid(Wx + Uh + b); g = tanh(.);
/// c = f*c_prev + i*g; h = o*tanh(c).
pub fn cell_step(
    tape: &mut Tape,
    p: &LstmCellParams,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> (Var, Var) {
    let pre_i = p.gate_pre(tape, 0, x, h_prev);
    let pre_f = p.gate_pre(tape, 1, x, h_prev);
    let pre_o = p.gate_pre(tape, 2, x, h_prev);
    let pre_g = p.gate_pre(tape, 3, x, h_prev);
    let i = tape.sigmoid(pre_i);
    let f = tape.sigmoid(pre_f);
    let o = tape.sigmoid(pre_o);
    let g = tape.tanh(pre_g);
    let fc = tape.mul(f, c_prev);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    (h, c)
}

#[derive(Clone)]
pub struct BiLstmParams {
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
}

impl BiLstmParams {
    pub fn init(name_prefix: &str, input_dim: usize, hidden: usize, seed: u64) -> Self {
        BiLstmParams {
            forward: LstmCellParams::init(&format!("{name_prefix}.fwd"), input_dim, hidden, seed),
            backward: LstmCellParams::init(&format!("{name_prefix}.bwd"), input_dim, hidden, seed),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = self.forward.params();
        p.extend(self.backward.params());
        p
    }
}

/// Run both directions from zero initial state and concatenate per position.
pub fn encode_sentence(tape: &mut Tape, p: &BiLstmParams, inputs: &[Var]) -> Vec<Var> {
    assert!(!inputs.is_empty(), "encode_sentence on empty sentence");
    let h = p.hidden();
    let zero = Tensor::vector(vec![0.0; h]);

    let run = |tape: &mut Tape, cell: &LstmCellParams, xs: &mut dyn Iterator<Item = Var>| {
        let mut hs = Vec::new();
        let mut h_prev = tape.constant(zero.clone());
        let mut c_prev = tape.constant(zero.clone());
        for x in xs {
            let (hh, cc) = cell_step(tape, cell, x, h_prev, c_prev);
            hs.push(hh);
            h_prev = hh;
            c_prev = cc;
        }
        hs
    };

    let fwd = run(tape, &p.forward, &mut inputs.iter().copied());
    let mut bwd = run(tape, &p.backward, &mut inputs.iter().rev().copied());
    bwd.reverse();

    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rand_vec(rng: &mut ChaCha20Rng, n: usize) -> Tensor {
        Tensor::vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_params_zero_state_gives_zero_h() {
        let mut p = LstmCellParams::init("cell", 3, 2, 1);
        for g in &p.gates {
            g.w.set_value(Tensor::matrix(2, 3, vec![0.0; 6]));
            g.u.set_value(Tensor::matrix(2, 2, vec![0.0; 4]));
            g.b.set_value(Tensor::vector(vec![0.0; 2]));
        }
        p.hidden = 2;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.5, -0.5, 1.0]));
        let h0 = tape.constant(Tensor::vector(vec![0.0; 2]));
        let c0 = tape.constant(Tensor::vector(vec![0.0; 2]));
        let (h, _c) = cell_step(&mut tape, &p, x, h0, c0);
        assert_eq!(tape.value(h).data(), &[0.0, 0.0]);
    }

    #[test]
    fn hidden_stays_strictly_inside_unit_box() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let p = LstmCellParams::init("cell", 4, 3, 8);
        let mut tape = Tape::new();
        let mut h = tape.constant(Tensor::vector(vec![0.0; 3]));
        let mut c = tape.constant(Tensor::vector(vec![0.0; 3]));
        for _ in 0..10 {
            let x = tape.constant(rand_vec(&mut rng, 4));
            let (hh, cc) = cell_step(&mut tape, &p, x, h, c);
            h = hh;
            c = cc;
            for &v in tape.value(h).data() {
                assert!(v.abs() < 1.0);
            }
        }
    }

    #[test]
    fn chained_steps_gradient_check() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let p = LstmCellParams::init("cell", 3, 2, 21);
        let xs: Vec<Tensor> = (0..3).map(|_| rand_vec(&mut rng, 3)).collect();
        let params = p.params();
        let loss = || {
            let mut tape = Tape::new();
            let mut h = tape.constant(Tensor::vector(vec![0.0; 2]));
            let mut c = tape.constant(Tensor::vector(vec![0.0; 2]));
            for x in &xs {
                let xv = tape.constant(x.clone());
                let (hh, cc) = cell_step(&mut tape, &p, xv, h, c);
                h = hh;
                c = cc;
            }
            let s = tape.dot(h, h);
            tape.backward(s);
            tape.scalar_value(s)
        };
        let err = gradient_check(loss, &params, 1e-5).unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn length_one_sentence_sees_single_input_both_ways() {
        let p = BiLstmParams::init("lstm", 3, 2, 5);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.1, 0.2, 0.3]));
        let out = encode_sentence(&mut tape, &p, &[x]);
        assert_eq!(out.len(), 1);
        assert_eq!(tape.value(out[0]).len(), 4);
    }

    #[test]
    fn reversal_with_tied_cells_swaps_halves() {
        let fwd = LstmCellParams::init("cell", 3, 2, 5);
        let tied = BiLstmParams {
            forward: fwd.clone(),
            backward: fwd,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let xs: Vec<Tensor> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();

        let encode = |inputs: &[Tensor]| -> Vec<Vec<f64>> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = encode_sentence(&mut tape, &tied, &vars);
            out.iter().map(|&v| tape.value(v).data().to_vec()).collect()
        };
        let straight = encode(&xs);
        let reversed_inputs: Vec<Tensor> = xs.iter().rev().cloned().collect();
        let reversed = encode(&reversed_inputs);
        let n = xs.len();
        for i in 0..n {
            let g = &straight[i];
            let r = &reversed[n - 1 - i];
            assert_eq!(&g[..2], &r[2..], "forward half should equal reversed backward half");
            assert_eq!(&g[2..], &r[..2]);
        }
    }

    #[test]
    fn causality_forward_half_ignores_suffix() {
        let p = BiLstmParams::init("lstm", 3, 2, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut xs: Vec<Tensor> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();

        let encode = |inputs: &[Tensor]| -> Vec<Vec<f64>> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = encode_sentence(&mut tape, &p, &vars);
            out.iter().map(|&v| tape.value(v).data().to_vec()).collect()
        };
        let before = encode(&xs);
        xs[3] = rand_vec(&mut rng, 3); // perturb the last input
        let after = encode(&xs);
        for i in 0..3 {
            assert_eq!(before[i][..2], after[i][..2], "forward half of g_{i} changed");
        }
        // and the backward half of the last position ignores the prefix
        let mut ys: Vec<Tensor> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();
        let b1 = encode(&ys);
        ys[0] = rand_vec(&mut rng, 3);
        let b2 = encode(&ys);
        for i in 1..4 {
            assert_eq!(b1[i][2..], b2[i][2..], "backward half of g_{i} changed");
        }
    }
}
