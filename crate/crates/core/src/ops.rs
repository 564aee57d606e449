//! Layer kernels: convolution, pooling, dense, activations.
//!
//! Accumulation order is fixed (row-major over input channel, kernel row,
//! kernel column for convolutions; ascending input index for dense) so two
//! runs over the same data produce bitwise-identical results. Fixed-point
//! kernels multiply-accumulate exactly in `i128`, add the bias, then narrow
//! once with round-half-to-even and saturation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{QFormat, Storage, Tensor};

/// Weights plus per-output bias.
///
/// Convolution weights are `[out_ch, in_ch, k_h, k_w]`; dense weights are
/// `[units, inputs]`. The bias is 1-D with one entry per output channel/unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub tensor: Tensor,
    pub bias: Tensor,
}

impl Kernel {
    pub fn new(tensor: Tensor, bias: Tensor) -> Result<Self> {
        let outputs = *tensor.shape().first().unwrap_or(&0);
        if bias.shape() != [outputs] {
            return Err(Error::Dimension {
                op: "kernel bias",
                lhs: tensor.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        if tensor.dtype() != bias.dtype() {
            return Err(Error::DType {
                op: "kernel",
                detail: format!("weights are {} but bias is {}", tensor.dtype(), bias.dtype()),
            });
        }
        Ok(Kernel { tensor, bias })
    }

    pub fn byte_len(&self) -> usize {
        self.tensor.byte_len() + self.bias.byte_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

/// Output extent and leading pad for one spatial axis.
pub fn conv_extent(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    if stride == 0 || kernel == 0 || kernel > input {
        return None;
    }
    match padding {
        Padding::Valid => Some(((input - kernel) / stride + 1, 0)),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

fn round_shift(value: i128, shift: u32) -> i128 {
    if shift == 0 {
        return value;
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

enum Operands<'a> {
    F32 {
        x: &'a [f32],
        w: &'a [f32],
        b: &'a [f32],
    },
    Fixed {
        format: QFormat,
        x: &'a [i32],
        w: &'a [i32],
        b: &'a [i32],
    },
}

fn operands<'a>(op: &'static str, input: &'a Tensor, kernel: &'a Kernel) -> Result<Operands<'a>> {
    match (input.storage(), kernel.tensor.storage(), kernel.bias.storage()) {
        (Storage::F32(x), Storage::F32(w), Storage::F32(b)) => Ok(Operands::F32 { x, w, b }),
        (
            Storage::Fixed { format: fx, raw: x },
            Storage::Fixed { format: fw, raw: w },
            Storage::Fixed { format: fb, raw: b },
        ) if fx == fw && fw == fb => Ok(Operands::Fixed {
            format: *fx,
            x,
            w,
            b,
        }),
        _ => Err(Error::DType {
            op,
            detail: format!(
                "input is {}, weights are {}, bias is {}",
                input.dtype(),
                kernel.tensor.dtype(),
                kernel.bias.dtype()
            ),
        }),
    }
}

struct FixedAcc {
    format: QFormat,
    saturated: u64,
}

impl FixedAcc {
    fn finish(&mut self, acc: i128, bias: i32) -> i32 {
        let f = u32::from(self.format.frac_bits);
        let wide = acc + ((bias as i128) << f);
        let (v, sat) = self.format.saturate(round_shift(wide, f));
        self.saturated += sat as u64;
        v
    }
}

/// 2-D convolution of a `[C, H, W]` input.
pub fn conv2d(input: &Tensor, kernel: &Kernel, stride: usize, padding: Padding) -> Result<Tensor> {
    let (&[c, h, w], &[o, kc, kh, kw]) = (input.shape(), kernel.tensor.shape()) else {
        return Err(Error::Dimension {
            op: "conv2d",
            lhs: input.shape().to_vec(),
            rhs: kernel.tensor.shape().to_vec(),
        });
    };
    let dim_err = || Error::Dimension {
        op: "conv2d",
        lhs: input.shape().to_vec(),
        rhs: kernel.tensor.shape().to_vec(),
    };
    if c != kc || kernel.bias.shape() != [o] {
        return Err(dim_err());
    }
    let (oh, pad_t) = conv_extent(h, kh, stride, padding).ok_or_else(dim_err)?;
    let (ow, pad_l) = conv_extent(w, kw, stride, padding).ok_or_else(dim_err)?;

    // Input coordinate for output position `out` and kernel offset `k`.
    let coord = |out: usize, k: usize, pad: usize, extent: usize| -> Option<usize> {
        (out * stride + k).checked_sub(pad).filter(|&i| i < extent)
    };

    let shape = vec![o, oh, ow];
    match operands("conv2d", input, kernel)? {
        Operands::F32 { x, w: wt, b } => {
            let mut out = Vec::with_capacity(o * oh * ow);
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0f32;
                        for ic in 0..c {
                            for ky in 0..kh {
                                let Some(iy) = coord(oy, ky, pad_t, h) else { continue };
                                for kx in 0..kw {
                                    let Some(ix) = coord(ox, kx, pad_l, w) else { continue };
                                    acc += wt[((oc * c + ic) * kh + ky) * kw + kx]
                                        * x[(ic * h + iy) * w + ix];
                                }
                            }
                        }
                        out.push(acc + b[oc]);
                    }
                }
            }
            Ok(Tensor::from_parts(shape, Storage::F32(out), 0))
        }
        Operands::Fixed {
            format,
            x,
            w: wt,
            b,
        } => {
            let mut fixed = FixedAcc {
                format,
                saturated: 0,
            };
            let mut out = Vec::with_capacity(o * oh * ow);
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0i128;
                        for ic in 0..c {
                            for ky in 0..kh {
                                let Some(iy) = coord(oy, ky, pad_t, h) else { continue };
                                for kx in 0..kw {
                                    let Some(ix) = coord(ox, kx, pad_l, w) else { continue };
                                    acc += wt[((oc * c + ic) * kh + ky) * kw + kx] as i128
                                        * x[(ic * h + iy) * w + ix] as i128;
                                }
                            }
                        }
                        out.push(fixed.finish(acc, b[oc]));
                    }
                }
            }
            Ok(Tensor::from_parts(
                shape,
                Storage::Fixed { format, raw: out },
                fixed.saturated,
            ))
        }
    }
}

/// Max pooling over `[C, H, W]` with valid windows.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Dimension {
            op: "maxpool2d",
            lhs: input.shape().to_vec(),
            rhs: vec![window, window],
        });
    };
    let dim_err = || Error::Dimension {
        op: "maxpool2d",
        lhs: input.shape().to_vec(),
        rhs: vec![window, window],
    };
    let (oh, _) = conv_extent(h, window, stride, Padding::Valid).ok_or_else(dim_err)?;
    let (ow, _) = conv_extent(w, window, stride, Padding::Valid).ok_or_else(dim_err)?;

    fn pool<T: Copy + PartialOrd>(
        x: &[T],
        (c, h, w): (usize, usize, usize),
        (oh, ow): (usize, usize),
        window: usize,
        stride: usize,
    ) -> Vec<T> {
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = x[(ch * h + oy * stride) * w + ox * stride];
                    for ky in 0..window {
                        for kx in 0..window {
                            let v = x[(ch * h + oy * stride + ky) * w + ox * stride + kx];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
        out
    }

    let storage = match input.storage() {
        Storage::F32(x) => Storage::F32(pool(x, (c, h, w), (oh, ow), window, stride)),
        Storage::Fixed { format, raw } => Storage::Fixed {
            format: *format,
            raw: pool(raw, (c, h, w), (oh, ow), window, stride),
        },
    };
    Ok(Tensor::from_parts(vec![c, oh, ow], storage, 0))
}

/// Fully connected layer: `out[i] = sum_j W[i][j] * in[j] + bias[i]`.
pub fn dense(input: &Tensor, kernel: &Kernel) -> Result<Tensor> {
    let (&[n], &[m, kn]) = (input.shape(), kernel.tensor.shape()) else {
        return Err(Error::Dimension {
            op: "dense",
            lhs: input.shape().to_vec(),
            rhs: kernel.tensor.shape().to_vec(),
        });
    };
    if n != kn || kernel.bias.shape() != [m] {
        return Err(Error::Dimension {
            op: "dense",
            lhs: input.shape().to_vec(),
            rhs: kernel.tensor.shape().to_vec(),
        });
    }
    match operands("dense", input, kernel)? {
        Operands::F32 { x, w, b } => {
            let out = (0..m)
                .map(|i| {
                    let row = &w[i * n..(i + 1) * n];
                    let mut acc = 0f32;
                    for j in 0..n {
                        acc += row[j] * x[j];
                    }
                    acc + b[i]
                })
                .collect();
            Ok(Tensor::from_parts(vec![m], Storage::F32(out), 0))
        }
        Operands::Fixed { format, x, w, b } => {
            let mut fixed = FixedAcc {
                format,
                saturated: 0,
            };
            let out = (0..m)
                .map(|i| {
                    let row = &w[i * n..(i + 1) * n];
                    let acc = row
                        .iter()
                        .zip(x)
                        .fold(0i128, |acc, (&wi, &xi)| acc + wi as i128 * xi as i128);
                    fixed.finish(acc, b[i])
                })
                .collect();
            Ok(Tensor::from_parts(
                vec![m],
                Storage::Fixed { format, raw: out },
                fixed.saturated,
            ))
        }
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let storage = match input.storage() {
        Storage::F32(x) => Storage::F32(x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()),
        Storage::Fixed { format, raw } => Storage::Fixed {
            format: *format,
            raw: raw.iter().map(|&v| v.max(0)).collect(),
        },
    };
    Tensor::from_parts(input.shape().to_vec(), storage, 0)
}

pub fn flatten(input: &Tensor) -> Tensor {
    input
        .reshape(vec![input.len()])
        .expect("flattening preserves the element count")
}

/// Index of the maximum element; ties resolve to the lowest index.
pub fn argmax(input: &Tensor) -> Result<usize> {
    if input.is_empty() {
        return Err(Error::InvalidTensor("argmax of an empty tensor".into()));
    }
    let mut best = 0;
    match input.storage() {
        Storage::F32(x) => {
            for (i, &v) in x.iter().enumerate() {
                if v > x[best] {
                    best = i;
                }
            }
        }
        Storage::Fixed { raw, .. } => {
            for (i, &v) in raw.iter().enumerate() {
                if v > raw[best] {
                    best = i;
                }
            }
        }
    }
    Ok(best)
}

/// Multiply every element by `factor`. Fixed-point results are re-gridded
/// with saturation.
pub fn scale(input: &Tensor, factor: f32) -> Tensor {
    scale_each(input, |_| factor)
}

/// Multiply element `i` by `factor(i)`.
pub fn scale_each(input: &Tensor, factor: impl Fn(usize) -> f32) -> Tensor {
    match input.storage() {
        Storage::F32(x) => Tensor::from_parts(
            input.shape().to_vec(),
            Storage::F32(x.iter().enumerate().map(|(i, &v)| v * factor(i)).collect()),
            0,
        ),
        Storage::Fixed { format, raw } => {
            let mut saturated = 0;
            let out = raw
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let (v, sat) = format.quantize_value(format.to_f64(r) * factor(i) as f64);
                    saturated += sat as u64;
                    v
                })
                .collect();
            Tensor::from_parts(
                input.shape().to_vec(),
                Storage::Fixed {
                    format: *format,
                    raw: out,
                },
                saturated,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::quantize;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_f32(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn k(wshape: &[usize], w: &[f32], b: &[f32]) -> Kernel {
        Kernel::new(t(wshape, w), t(&[b.len()], b)).unwrap()
    }

    #[test]
    fn conv_of_zero_input_is_zero() {
        let out = conv2d(
            &t(&[1, 3, 3], &[0.0; 9]),
            &k(&[1, 1, 2, 2], &[0.3, -1.0, 2.0, 7.0], &[0.0]),
            1,
            Padding::Valid,
        )
        .unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.as_f32().unwrap(), &[0.0; 4]);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = t(&[1, 2, 3], &[1.5, -2.0, 0.25, 9.0, 0.0, -7.5]);
        let out = conv2d(&x, &k(&[1, 1, 1, 1], &[1.0], &[0.0]), 1, Padding::Valid).unwrap();
        assert!(out.bitwise_eq(&x));
    }

    #[test]
    fn diagonal_kernel_windows() {
        let x = t(&[1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let out = conv2d(&x, &k(&[1, 1, 2, 2], &[1., 0., 0., 1.], &[0.0]), 1, Padding::Valid).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[6., 8., 12., 14.]);
    }

    #[test]
    fn same_padding_keeps_extent() {
        let x = t(&[1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let out = conv2d(&x, &k(&[1, 1, 3, 3], &[1.0; 9], &[0.0]), 1, Padding::Same).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        // corners sum 2x2 neighbourhoods, centre sums everything
        assert_eq!(out.as_f32().unwrap(), &[12., 21., 16., 27., 45., 33., 24., 39., 28.]);
    }

    #[test]
    fn conv_rejects_mismatches() {
        let x = t(&[2, 3, 3], &[0.0; 18]);
        let err = conv2d(&x, &k(&[1, 1, 2, 2], &[0.0; 4], &[0.0]), 1, Padding::Valid).unwrap_err();
        assert!(err.to_string().contains("[2, 3, 3]"));
        assert!(err.to_string().contains("[1, 1, 2, 2]"));
        let x = t(&[1, 2, 2], &[0.0; 4]);
        assert!(conv2d(&x, &k(&[1, 1, 3, 3], &[0.0; 9], &[0.0]), 1, Padding::Valid).is_err());
        assert!(conv2d(&x, &k(&[1, 1, 1, 1], &[0.0], &[0.0]), 0, Padding::Valid).is_err());
    }

    #[test]
    fn maxpool_examples() {
        let c = t(&[1, 4, 4], &[2.5; 16]);
        assert_eq!(maxpool2d(&c, 2, 2).unwrap().as_f32().unwrap(), &[2.5; 4]);
        let x = t(&[1, 2, 2], &[1., 2., 3., 4.]);
        assert_eq!(maxpool2d(&x, 2, 2).unwrap().as_f32().unwrap(), &[4.0]);
        let ramp: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let out = maxpool2d(&t(&[1, 4, 4], &ramp), 2, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.as_f32().unwrap(), &[5., 7., 13., 15.]);
        assert!(maxpool2d(&x, 3, 1).is_err());
    }

    #[test]
    fn dense_examples() {
        let x = t(&[2], &[5., 6.]);
        let out = dense(&x, &k(&[2, 2], &[1., 2., 3., 4.], &[0., 1.])).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[17., 40.]);
        let id = dense(&x, &k(&[2, 2], &[1., 0., 0., 1.], &[0., 0.])).unwrap();
        assert!(id.bitwise_eq(&x));
        let b = dense(&x, &k(&[2, 2], &[0.; 4], &[-3., 0.5])).unwrap();
        assert_eq!(b.as_f32().unwrap(), &[-3., 0.5]);
        assert!(dense(&t(&[3], &[0.; 3]), &k(&[2, 2], &[0.; 4], &[0.; 2])).is_err());
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&t(&[3], &[-1., 0., 2.])).as_f32().unwrap(), &[0., 0., 2.]);
        assert_eq!(relu(&t(&[2], &[-1., -5.])).as_f32().unwrap(), &[0., 0.]);
        let pos = t(&[2], &[0.5, 3.]);
        assert!(relu(&pos).bitwise_eq(&pos));
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&t(&[3], &[0.1, 0.9, 0.3])).unwrap(), 1);
        assert_eq!(argmax(&t(&[2], &[5., 5.])).unwrap(), 0);
        assert_eq!(argmax(&t(&[1], &[-2.])).unwrap(), 0);
    }

    #[test]
    fn fixed_point_dense_rounds_and_saturates() {
        let q = QFormat::new(8, 8).unwrap();
        let x = quantize(&t(&[2], &[100.0, 100.0]), q).unwrap();
        let kern = Kernel::new(
            quantize(&t(&[2, 2], &[1.0, 1.0, 0.5, -0.25]), q).unwrap(),
            quantize(&t(&[2], &[0.0, 0.0]), q).unwrap(),
        )
        .unwrap();
        let out = dense(&x, &kern).unwrap();
        assert_eq!(out.saturated(), 1);
        assert_eq!(out.to_f64_vec(), vec![q.max_value(), 25.0]);
    }

    #[test]
    fn fixed_point_rejects_mixed_formats() {
        let x = quantize(&t(&[1], &[1.0]), QFormat::Q16_16).unwrap();
        assert!(matches!(
            dense(&x, &k(&[1, 1], &[1.0], &[0.0])),
            Err(Error::DType { .. })
        ));
    }

    #[test]
    fn round_shift_is_half_even() {
        assert_eq!(round_shift(0b0110, 2), 2); // 1.5 -> 2
        assert_eq!(round_shift(0b1010, 2), 2); // 2.5 -> 2
        assert_eq!(round_shift(0b1011, 2), 3);
        assert_eq!(round_shift(-6, 2), -2); // -1.5 -> -2
        assert_eq!(round_shift(-10, 2), -2); // -2.5 -> -2
        assert_eq!(round_shift(-11, 2), -3);
    }
}
