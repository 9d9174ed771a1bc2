//! Channel-merging operations: the three-way per-channel max that collapses
//! the cardinal-channel branches, and channel concatenation/splitting.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which of the three branches won each element of a group-max forward pass.
#[derive(Clone, Debug)]
pub struct GroupArgmax {
    shape: [usize; 4],
    branch: Vec<u8>,
}

fn check_same_shape(a: &Tensor, b: &Tensor, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(context, &a.shape(), &b.shape()));
    }
    Ok(())
}

/// Elementwise maximum of three same-shaped tensors:
/// out[..., k] = max(a[..., k], b[..., k], c[..., k]).
///
/// This is the fusion step that groups the per-color filter responses by
/// filter index and keeps the strongest response, so three C-channel
/// branches collapse back to C channels.
pub fn channel_group_max(a: &Tensor, b: &Tensor, c: &Tensor) -> Result<Tensor> {
    let (out, _) = channel_group_max_with_argmax(a, b, c)?;
    Ok(out)
}

/// As [`channel_group_max`], additionally recording the winning branch per
/// element (ties go to the earliest argument) for the backward pass.
pub fn channel_group_max_with_argmax(
    a: &Tensor,
    b: &Tensor,
    c: &Tensor,
) -> Result<(Tensor, GroupArgmax)> {
    check_same_shape(a, b, "channel_group_max inputs")?;
    check_same_shape(a, c, "channel_group_max inputs")?;
    let mut out = Tensor::zeros(a.shape());
    let mut branch = vec![0u8; a.len()];
    let (da, db, dc) = (a.data(), b.data(), c.data());
    let od = out.data_mut();
    for i in 0..da.len() {
        let mut v = da[i];
        let mut which = 0u8;
        if db[i] > v {
            v = db[i];
            which = 1;
        }
        if dc[i] > v {
            v = dc[i];
            which = 2;
        }
        od[i] = v;
        branch[i] = which;
    }
    Ok((
        out,
        GroupArgmax {
            shape: a.shape(),
            branch,
        },
    ))
}

/// Routes the gradient to the branch that produced each output element.
pub fn channel_group_max_backward(
    argmax: &GroupArgmax,
    grad_out: &Tensor,
) -> Result<[Tensor; 3]> {
    if grad_out.shape() != argmax.shape {
        return Err(Error::shape(
            "channel_group_max grad_out",
            &grad_out.shape(),
            &argmax.shape,
        ));
    }
    let mut grads = [
        Tensor::zeros(argmax.shape),
        Tensor::zeros(argmax.shape),
        Tensor::zeros(argmax.shape),
    ];
    let go = grad_out.data();
    for (i, &which) in argmax.branch.iter().enumerate() {
        grads[which as usize].data_mut()[i] = go[i];
    }
    Ok(grads)
}

/// Appends the inputs along the channel axis, in argument order. All inputs
/// must agree on batch and spatial extents.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(Error::invalid("concat_channels needs at least one input"));
    }
    let (n, h, w, _) = inputs[0].dims();
    let mut total_c = 0;
    for t in inputs {
        let (tn, th, tw, tc) = t.dims();
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(
                "concat_channels spatial dims",
                &inputs[0].shape(),
                &t.shape(),
            ));
        }
        total_c += tc;
    }
    let mut out = Tensor::zeros([n, h, w, total_c]);
    let od = out.data_mut();
    let pixels = n * h * w;
    for p in 0..pixels {
        let mut offset = 0;
        for t in inputs {
            let tc = t.shape()[3];
            od[p * total_c + offset..p * total_c + offset + tc]
                .copy_from_slice(&t.data()[p * tc..(p + 1) * tc]);
            offset += tc;
        }
    }
    Ok(out)
}

/// Splits along the channel axis into pieces of the given widths; the exact
/// inverse of [`concat_channels`]. Widths must sum to the channel count.
pub fn split_channels(input: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (n, h, w, c) = input.dims();
    let total: usize = widths.iter().sum();
    if total != c {
        return Err(Error::invalid(format!(
            "split widths {:?} sum to {}, tensor has {} channels",
            widths, total, c
        )));
    }
    let pixels = n * h * w;
    let mut outs: Vec<Tensor> = widths.iter().map(|&cw| Tensor::zeros([n, h, w, cw])).collect();
    for p in 0..pixels {
        let mut offset = 0;
        for (t, &cw) in outs.iter_mut().zip(widths) {
            t.data_mut()[p * cw..(p + 1) * cw]
                .copy_from_slice(&input.data()[p * c + offset..p * c + offset + cw]);
            offset += cw;
        }
    }
    Ok(outs)
}
