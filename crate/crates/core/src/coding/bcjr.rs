use super::conv::ConvCode;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BcjrOutput {
    /// A-posteriori minus a-priori LLRs on the coded bits.
    pub coded_extrinsic: Vec<f64>,
    /// A-posteriori LLRs on the payload bits (tail excluded).
    pub info_llr: Vec<f64>,
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact log-domain forward-backward over the zero-tail trellis.
pub fn bcjr_extrinsic(llrs: &[f64], code: &ConvCode) -> Result<BcjrOutput> {
    let info_len = code.info_len_for(llrs.len())?;
    if info_len == 0 {
        return invalid("codeword carries no payload bits");
    }
    if llrs.iter().any(|l| l.is_nan()) {
        return invalid("NaN input LLR");
    }
    let steps = llrs.len() / 2;
    let ns = code.num_states();
    let ninf = f64::NEG_INFINITY;

    let mut next = vec![[0usize; 2]; ns];
    let mut outs = vec![[[0u8; 2]; 2]; ns];
    for s in 0..ns {
        for u in 0..2u8 {
            let (o, n) = code.step(s, u);
            next[s][u as usize] = n;
            outs[s][u as usize] = o;
        }
    }
    let gamma = |k: usize, o: [u8; 2]| -> f64 {
        let g = |l: f64, c: u8| if c == 0 { 0.5 * l } else { -0.5 * l };
        g(llrs[2 * k], o[0]) + g(llrs[2 * k + 1], o[1])
    };
    let inputs = |k: usize| if k < info_len { 0..2u8 } else { 0..1u8 };

    let mut alpha = vec![ninf; (steps + 1) * ns];
    alpha[0] = 0.0;
    for k in 0..steps {
        let (cur, nxt) = alpha.split_at_mut((k + 1) * ns);
        let cur = &cur[k * ns..];
        for s in 0..ns {
            if cur[s] == ninf {
                continue;
            }
            for u in inputs(k) {
                let n = next[s][u as usize];
                nxt[n] = log_add(nxt[n], cur[s] + gamma(k, outs[s][u as usize]));
            }
        }
        let m = nxt[..ns].iter().cloned().fold(ninf, f64::max);
        nxt[..ns].iter_mut().for_each(|a| *a -= m);
    }

    let mut beta = vec![ninf; (steps + 1) * ns];
    beta[steps * ns] = 0.0;
    for k in (0..steps).rev() {
        let (head, tail) = beta.split_at_mut((k + 1) * ns);
        let nb = &tail[..ns];
        let cur = &mut head[k * ns..];
        for s in 0..ns {
            let mut acc = ninf;
            for u in inputs(k) {
                let n = next[s][u as usize];
                acc = log_add(acc, gamma(k, outs[s][u as usize]) + nb[n]);
            }
            cur[s] = acc;
        }
        let m = cur.iter().cloned().fold(ninf, f64::max);
        cur.iter_mut().for_each(|b| *b -= m);
    }

    let mut coded_extrinsic = vec![0.0; llrs.len()];
    let mut info_llr = vec![0.0; info_len];
    for k in 0..steps {
        let a = &alpha[k * ns..(k + 1) * ns];
        let b = &beta[(k + 1) * ns..(k + 2) * ns];
        let mut bit_acc = [[ninf; 2]; 2];
        let mut info_acc = [ninf; 2];
        for s in 0..ns {
            if a[s] == ninf {
                continue;
            }
            for u in inputs(k) {
                let o = outs[s][u as usize];
                let m = a[s] + gamma(k, o) + b[next[s][u as usize]];
                info_acc[u as usize] = log_add(info_acc[u as usize], m);
                for j in 0..2 {
                    bit_acc[j][o[j] as usize] = log_add(bit_acc[j][o[j] as usize], m);
                }
            }
        }
        for j in 0..2 {
            let app = bit_acc[j][0] - bit_acc[j][1];
            coded_extrinsic[2 * k + j] = if app.is_finite() { app - llrs[2 * k + j] } else { 0.0 };
        }
        if k < info_len {
            info_llr[k] = info_acc[0] - info_acc[1];
        }
    }
    Ok(BcjrOutput { coded_extrinsic, info_llr })
}
