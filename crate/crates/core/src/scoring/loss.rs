use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::model::{front_row, top_row, ParserModel, PreparedSentence};
use super::params::*;
use crate::error::{Error, Result};
use crate::transition::{initial_config, Action, ActionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    Trans,
    Dir,
    Label,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    head: Head,
    row_i: usize,
    row_j: usize,
    target: usize,
    /// First word: EOS is excluded as well as BOS.
    first: bool,
}

/// The classifier decisions along an oracle derivation. Forced moves carry
/// no event.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvents {
    n: usize,
    events: Vec<Event>,
}

impl OracleEvents {
    pub fn new(s: &PreparedSentence, actions: &[Action], eos: u32) -> Result<Self> {
        let n = s.len();
        let mut c = initial_config(n)?;
        let mut events = vec![Event {
            head: Head::Word,
            row_i: top_row(None),
            row_j: front_row(0, n),
            target: s.classes[0] as usize,
            first: true,
        }];
        for &a in actions {
            let legal = c.legal();
            let (i, j) = (top_row(c.top()), front_row(c.front(), n));
            let ev = |head, target| Event {
                head,
                row_i: i,
                row_j: j,
                target,
                first: false,
            };
            if legal.shift && legal.reduce() {
                let t = usize::from(a.kind != ActionKind::Shift);
                events.push(ev(Head::Trans, t));
            }
            match a.kind {
                ActionKind::Shift => {
                    let w = if c.front() == n {
                        eos
                    } else {
                        s.classes[c.front()]
                    };
                    events.push(ev(Head::Word, w as usize));
                }
                kind => {
                    if legal.left && legal.right {
                        events.push(ev(Head::Dir, usize::from(kind == ActionKind::RightArc)));
                    }
                    events.push(ev(Head::Label, a.label as usize));
                }
            }
            c.apply_mut(a)?;
        }
        if !c.is_terminal() {
            return Err(Error::Contract("oracle sequence does not complete the tree".into()));
        }
        Ok(OracleEvents { n, events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Negative log-likelihood per factor, in nats.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub transition: f64,
    pub direction: f64,
    pub label: f64,
    pub word: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.transition + self.direction + self.label + self.word
    }
}

fn tensors(head: Head) -> (usize, usize) {
    match head {
        Head::Trans => (TRANS_W, TRANS_B),
        Head::Dir => (DIR_W, DIR_B),
        Head::Label => (LABEL_W, LABEL_B),
        Head::Word => (WORD_W, WORD_B),
    }
}

/// Summed negative log-probability of every oracle event. When `grads` is
/// given, exact gradients are added into it. `dropout` zeroes encoder rows
/// with the given probability and rescales the rest.
pub fn nll_loss<R: Rng>(
    model: &ParserModel,
    s: &PreparedSentence,
    events: &OracleEvents,
    grads: Option<&mut ParamSet>,
    dropout: Option<(&mut R, f64)>,
) -> Result<LossBreakdown> {
    if events.n != s.len() {
        return Err(Error::Contract("oracle events belong to another sentence".into()));
    }
    let p = &model.params.tensors;
    let d = model.d();
    let enc = model.encode_rows(s);
    let mut h = model.feature_rows(&enc);
    let mut keep: Option<Array2<f64>> = None;
    if let Some((rng, rate)) = dropout {
        if rate > 0.0 {
            let scale = 1.0 / (1.0 - rate);
            let m = Array2::from_shape_fn((enc.nrows(), d), |_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    scale
                }
            });
            let mut rows = h.slice_mut(s![2.., ..]);
            rows *= &m;
            keep = Some(m);
        }
    }

    let mut out = LossBreakdown::default();
    let mut grads = grads;
    let mut dh = Array2::<f64>::zeros(h.raw_dim());
    let (bos, eos) = (model.config.bos as usize, model.config.eos as usize);
    for head in [Head::Trans, Head::Dir, Head::Label, Head::Word] {
        let evs: Vec<&Event> = events.events.iter().filter(|e| e.head == head).collect();
        if evs.is_empty() {
            continue;
        }
        let (wi, bi) = tensors(head);
        let mut x = Array2::<f64>::zeros((evs.len(), 2 * d));
        for (r, e) in evs.iter().enumerate() {
            x.slice_mut(s![r, ..d]).assign(&h.row(e.row_i));
            x.slice_mut(s![r, d..]).assign(&h.row(e.row_j));
        }
        let mut z = x.dot(&p[wi].t()) + &p[bi].row(0);
        let mut nll = 0.0;
        for (r, e) in evs.iter().enumerate() {
            let mut row = z.row_mut(r);
            if head == Head::Word {
                row[bos] = f64::NEG_INFINITY;
                if e.first {
                    row[eos] = f64::NEG_INFINITY;
                }
            }
            let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - mx).exp());
            let sum = row.sum();
            row /= sum;
            nll -= row[e.target].ln();
            row[e.target] -= 1.0;
        }
        match head {
            Head::Trans => out.transition = nll,
            Head::Dir => out.direction = nll,
            Head::Label => out.label = nll,
            Head::Word => out.word = nll,
        }
        if let Some(g) = grads.as_deref_mut() {
            // z now holds dL/dz
            g.tensors[wi] += &z.t().dot(&x);
            g.tensors[bi] += &z.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dx = z.dot(&p[wi]);
            for (r, e) in evs.iter().enumerate() {
                let mut a = dh.row_mut(e.row_i);
                a += &dx.slice(s![r, ..d]);
                let mut b = dh.row_mut(e.row_j);
                b += &dx.slice(s![r, d..]);
            }
        }
    }
    if !out.total().is_finite() {
        return Err(Error::Diverged("non-finite loss".into()));
    }

    let Some(g) = grads else {
        return Ok(out);
    };
    let mut g_null = g.tensors[NULL].row_mut(0);
    g_null += &dh.row(0);
    let mut g_root = g.tensors[ROOT].row_mut(0);
    g_root += &dh.row(1);
    let mut denc = dh.slice(s![2.., ..]).to_owned();
    if let Some(m) = &keep {
        denc *= m;
    }
    backprop_encoder(model, s, &enc, denc, g);
    Ok(out)
}

fn backprop_encoder(
    model: &ParserModel,
    s: &PreparedSentence,
    enc: &Array2<f64>,
    mut denc: Array2<f64>,
    g: &mut ParamSet,
) {
    let p = &model.params.tensors;
    if s.external.is_none() {
        let d = model.d();
        let mut da_sum = Array1::<f64>::zeros(d);
        let mut dwh = Array2::<f64>::zeros((d, d));
        let mut dwx = Array2::<f64>::zeros(p[WX].raw_dim());
        for t in (1..enc.nrows()).rev() {
            let ht = enc.row(t);
            let da = &denc.row(t) * &ht.mapv(|v| 1.0 - v * v);
            let tok = s.inputs[t - 1] as usize;
            let e = p[EMB].row(tok);
            dwx += &outer(&da, &e.to_owned());
            dwh += &outer(&da, &enc.row(t - 1).to_owned());
            da_sum += &da;
            let mut ge = g.tensors[EMB].row_mut(tok);
            ge += &p[WX].t().dot(&da);
            let back = p[WH].t().dot(&da);
            let mut prev = denc.row_mut(t - 1);
            prev += &back;
        }
        g.tensors[WX] += &dwx;
        g.tensors[WH] += &dwh;
        let mut gb = g.tensors[BH].row_mut(0);
        gb += &da_sum;
    }
    let mut gbos = g.tensors[BOS].row_mut(0);
    gbos += &denc.row(0);
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
