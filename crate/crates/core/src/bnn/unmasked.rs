use super::{BnnError, BnnModel, InferenceResult};
use crate::netlist::CycleReport;

fn hd(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Cycle-level model of the single-adder unmasked accelerator.
///
/// Every node takes `fan_in + 1` cycles: one accumulate per input into a
/// fresh accumulator, then one cycle adding the bias. Input-layer terms are
/// `+pixel` or `-pixel`; later layers accumulate the XNOR popcount and the
/// last cycle computes `2 * acc - fan_in + bias`. Activations are the
/// inverted MSB. The argmax loads the first output and then swaps on the
/// MSB of `max - out_k`, one cycle per comparison. Each cycle reports the
/// Hamming distance of the accumulator, pixel, output, max and index
/// registers.
pub fn infer_unmasked(model: &BnnModel, image: &[u32]) -> Result<InferenceResult, BnnError> {
    model.validate()?;
    model.check_image(image)?;
    let w = model.width;
    let mask = model.mask();
    let msb = |v: u64| (v >> (w - 1)) & 1 == 1;
    let mut reports = Vec::new();
    let mut push = |reg_hd: u32| {
        reports.push(CycleReport {
            reg_hd,
            ..Default::default()
        })
    };

    let (mut acc, mut pix) = (0u64, 0u64);
    let mut activations: Vec<Vec<bool>> = Vec::new();
    let n_out = model.n_out();
    let mut outs = vec![0u64; n_out];
    for l in 0..model.n_layers() {
        let fan_in = model.layer_sizes[l];
        let last = l + 1 == model.n_layers();
        let mut acts = Vec::with_capacity(model.layer_sizes[l + 1]);
        for j in 0..model.layer_sizes[l + 1] {
            for i in 0..fan_in {
                let wt = model.weights[l][j][i];
                let (term, pix_new) = if l == 0 {
                    let p = image[i] as u64;
                    (if wt { p } else { p.wrapping_neg() & mask }, p)
                } else {
                    ((activations[l - 1][i] == wt) as u64, pix)
                };
                let base = if i == 0 { 0 } else { acc };
                let new = (base + term) & mask;
                push(hd(acc, new) + hd(pix, pix_new));
                acc = new;
                pix = pix_new;
            }
            let bias = model.biases[l][j] as u64;
            let new = if l == 0 {
                acc.wrapping_add(bias) & mask
            } else {
                (2 * acc).wrapping_sub(fan_in as u64).wrapping_add(bias) & mask
            };
            let mut cycle_hd = hd(acc, new);
            acc = new;
            acts.push(!msb(acc));
            if last {
                cycle_hd += hd(outs[j], acc);
                outs[j] = acc;
            }
            push(cycle_hd);
        }
        activations.push(acts);
    }
    activations.pop();

    let (mut max, mut idx) = (outs[0], 0usize);
    push(hd(0, max));
    for (k, &out) in outs.iter().enumerate().skip(1) {
        let diff = max.wrapping_sub(out) & mask;
        let mut cycle_hd = hd(acc, diff);
        acc = diff;
        if msb(diff) {
            cycle_hd += hd(max, out) + hd(idx as u64, k as u64);
            max = out;
            idx = k;
        }
        push(cycle_hd);
    }
    Ok(InferenceResult {
        class_index: idx,
        class_index_shares: None,
        cycle_count: reports.len(),
        cycle_reports: reports,
        activations,
        output_sums: outs,
    })
}

/// Cycle at which the accumulator of node 0 in the first layer absorbs the
/// product of input `input`.
pub fn unmasked_accumulate_cycle(input: usize) -> usize {
    input
}
