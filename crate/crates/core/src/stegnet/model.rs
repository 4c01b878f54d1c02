//! The concealing/revealing network: fusion block, Haar/space-to-depth
//! front end and the stack of affine coupling blocks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::Conv3x3;
use super::coupling::{CouplingBlock, DenseSpec, InverseCache, MixInit};
use super::dense::DenseBlock;
use super::ffb::FusionBlock;
use super::secrets::{ChannelLayout, SecretStack, SECRET_CHANNELS};
use super::tensor::{Real, Tensor};
use super::wavelet::{depth_to_space, dwt, iwt, space_to_depth};
use crate::error::{shape_err, Error, Result};
use crate::trainer::loss::{self, LossBreakdown, LossWeights};

/// Carrier image channels (RGB).
pub const CARRIER_CHANNELS: usize = 3;

/// Architecture hyper-parameters; everything needed to rebuild parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    /// Multiplier applied to the binary QR image before embedding.
    pub m_qr: f64,
    pub n_blocks: usize,
    pub dense_growth: usize,
    pub dense_layers: usize,
    pub ffb_features: usize,
    pub ffb_blocks: usize,
    pub mix_init: MixInit,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            m_qr: 0.15,
            n_blocks: 32,
            dense_growth: 32,
            dense_layers: 5,
            ffb_features: 32,
            ffb_blocks: 2,
            mix_init: MixInit::Orthogonal,
        }
    }
}

impl Hyper {
    pub fn isn_carrier_channels(&self) -> usize {
        4 * CARRIER_CHANNELS
    }

    pub fn isn_secret_channels(&self) -> usize {
        4 * SECRET_CHANNELS
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m_qr.is_finite() || self.m_qr <= 0.0 {
            return Err(Error::Parameter(format!("m_qr must be positive, got {}", self.m_qr)));
        }
        if self.n_blocks == 0 || self.dense_growth == 0 || self.dense_layers == 0 || self.ffb_features == 0 {
            return Err(Error::Parameter("block counts and widths must be positive".into()));
        }
        Ok(())
    }
}

/// 8-bit RGB image, interleaved `HWC`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedImage {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<u8>,
}

impl EncodedImage {
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Self {
        let (c, h, w) = t.dims();
        debug_assert_eq!(c, CARRIER_CHANNELS);
        let mut rgb = vec![0u8; h * w * 3];
        for ch in 0..3 {
            for (i, &v) in t.plane(ch).iter().enumerate() {
                rgb[i * 3 + ch] = quantize(v);
            }
        }
        Self { height: h, width: w, rgb }
    }

    /// De-quantized `[0, 1]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let scale = T::lit(1.0 / 255.0);
        Tensor::from_fn(3, self.height, self.width, |c, y, x| {
            T::lit(f64::from(self.rgb[(y * self.width + x) * 3 + c])) * scale
        })
    }
}

#[inline]
pub fn quantize<T: Real>(v: T) -> u8 {
    let v = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
    libm::round(v * 255.0) as u8
}

/// Snaps to the 8-bit grid without clamping, so out-of-range pixels stay
/// visible to the loss.
#[inline]
fn round_to_grid<T: Real>(v: T) -> T {
    let s = T::lit(255.0);
    (v * s).round() / s
}

/// Output of [`StegModel::conceal`].
#[derive(Clone, Debug)]
pub struct Concealed<T> {
    pub image: EncodedImage,
    /// Spatial ISN output before clamping and quantization.
    pub raw: Tensor<T>,
    /// The 16 ISN channels that are not part of the encoded image.
    pub aux: Tensor<T>,
}

/// Output of [`StegModel::reveal`].
#[derive(Clone, Debug)]
pub struct Revealed<T> {
    pub secrets: SecretStack<T>,
    pub carrier: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StegModel<T> {
    pub hyper: Hyper,
    pub ffb_enc: FusionBlock<T>,
    pub ffb_dec: FusionBlock<T>,
    pub blocks: Vec<CouplingBlock<T>>,
}

/// Callback signature for [`StegModel::visit`]: name, shape, values.
pub type Visitor<'a, T> = dyn FnMut(&str, &[usize], &[T]) + 'a;
pub type VisitorMut<'a, T> = dyn FnMut(&str, &[usize], &mut [T]) + 'a;

fn visit_conv<T>(c: &Conv3x3<T>, name: &str, f: &mut Visitor<'_, T>) {
    f(&format!("{name}.weight"), &[c.out_ch, c.in_ch, 3, 3], &c.weight);
    f(&format!("{name}.bias"), &[c.out_ch], &c.bias);
}

fn visit_conv_mut<T>(c: &mut Conv3x3<T>, name: &str, f: &mut VisitorMut<'_, T>) {
    f(&format!("{name}.weight"), &[c.out_ch, c.in_ch, 3, 3], &mut c.weight);
    f(&format!("{name}.bias"), &[c.out_ch], &mut c.bias);
}

fn visit_dense<T>(d: &DenseBlock<T>, name: &str, f: &mut Visitor<'_, T>) {
    for (i, c) in d.layers.iter().enumerate() {
        visit_conv(c, &format!("{name}.conv{i}"), f);
    }
}

fn visit_dense_mut<T>(d: &mut DenseBlock<T>, name: &str, f: &mut VisitorMut<'_, T>) {
    for (i, c) in d.layers.iter_mut().enumerate() {
        visit_conv_mut(c, &format!("{name}.conv{i}"), f);
    }
}

fn visit_ffb<T>(b: &FusionBlock<T>, name: &str, f: &mut Visitor<'_, T>) {
    visit_conv(&b.lift, &format!("{name}.lift"), f);
    for (i, d) in b.blocks.iter().enumerate() {
        visit_dense(d, &format!("{name}.dense{i}"), f);
    }
    visit_conv(&b.project, &format!("{name}.project"), f);
}

fn visit_ffb_mut<T>(b: &mut FusionBlock<T>, name: &str, f: &mut VisitorMut<'_, T>) {
    visit_conv_mut(&mut b.lift, &format!("{name}.lift"), f);
    for (i, d) in b.blocks.iter_mut().enumerate() {
        visit_dense_mut(d, &format!("{name}.dense{i}"), f);
    }
    visit_conv_mut(&mut b.project, &format!("{name}.project"), f);
}

/// Caches of one training pass.
struct PassCache<T> {
    ffb_enc: super::ffb::FusionCache<T>,
    forward: Vec<super::coupling::ForwardCache<T>>,
    inverse: Vec<InverseCache<T>>,
    ffb_dec: super::ffb::FusionCache<T>,
}

/// Everything one training pass produces besides the gradient.
#[derive(Clone, Debug)]
pub struct PassOutput<T> {
    pub loss: LossBreakdown,
    /// Encoded image as the reveal pass saw it (rounded, unclamped).
    pub encoded: Tensor<T>,
    /// Restored secret channels (all four).
    pub restored: Tensor<T>,
}

impl<T: Real> StegModel<T> {
    /// Fresh model: fusion blocks and coupling branches start as identity /
    /// zero contributions, 1x1 kernels as configured by `mix_init`.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = CARRIER_CHANNELS + SECRET_CHANNELS;
        let ffb = |rng: &mut ChaCha8Rng| {
            FusionBlock::init(
                channels,
                hyper.ffb_features,
                hyper.dense_growth,
                hyper.dense_layers,
                hyper.ffb_blocks,
                rng,
            )
        };
        let ffb_enc = ffb(&mut rng);
        let ffb_dec = ffb(&mut rng);
        let dense = DenseSpec {
            growth: hyper.dense_growth,
            layers: hyper.dense_layers,
        };
        let blocks = (0..hyper.n_blocks)
            .map(|_| {
                CouplingBlock::init(
                    hyper.isn_carrier_channels(),
                    hyper.isn_secret_channels(),
                    dense,
                    hyper.mix_init,
                    &mut rng,
                )
            })
            .collect();
        Ok(Self {
            hyper,
            ffb_enc,
            ffb_dec,
            blocks,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hyper: self.hyper,
            ffb_enc: self.ffb_enc.zeros_like(),
            ffb_dec: self.ffb_dec.zeros_like(),
            blocks: self.blocks.iter().map(CouplingBlock::zeros_like).collect(),
        }
    }

    pub fn visit(&self, f: &mut Visitor<'_, T>) {
        visit_ffb(&self.ffb_enc, "ffb_enc", f);
        visit_ffb(&self.ffb_dec, "ffb_dec", f);
        for (i, b) in self.blocks.iter().enumerate() {
            let n = b.mix.channels;
            f(&format!("isn.{i}.mix"), &[n, n], &b.mix.weight);
            visit_dense(&b.phi, &format!("isn.{i}.phi"), f);
            visit_dense(&b.rho, &format!("isn.{i}.rho"), f);
            visit_dense(&b.eta, &format!("isn.{i}.eta"), f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut<'_, T>) {
        visit_ffb_mut(&mut self.ffb_enc, "ffb_enc", f);
        visit_ffb_mut(&mut self.ffb_dec, "ffb_dec", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let n = b.mix.channels;
            f(&format!("isn.{i}.mix"), &[n, n], &mut b.mix.weight);
            visit_dense_mut(&mut b.phi, &format!("isn.{i}.phi"), f);
            visit_dense_mut(&mut b.rho, &format!("isn.{i}.rho"), f);
            visit_dense_mut(&mut b.eta, &format!("isn.{i}.eta"), f);
        }
    }

    /// `(name, shape)` of every parameter tensor in visiting order.
    pub fn shape_table(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, _| out.push((String::from(name), shape.to_vec())));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, v| n += v.len());
        n
    }

    /// All parameters concatenated in visiting order.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, v| out.extend_from_slice(v));
        out
    }

    pub fn load_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(shape_err(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, _, v| {
            v.copy_from_slice(&values[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> StegModel<U> {
        let values: Vec<U> = self.flat().iter().map(|v| U::lit(v.to_f64().unwrap())).collect();
        let mut out = StegModel::<U>::init(self.hyper, 0).expect("hyper already validated");
        out.load_flat(&values).expect("same hyper gives same shapes");
        out
    }

    /// Checks that every 1x1 kernel is invertible and all values are finite.
    pub fn validate(&self) -> Result<()> {
        let mut bad = None;
        self.visit(&mut |name, _, v| {
            if bad.is_none() && v.iter().any(|x| !x.is_finite()) {
                bad = Some(String::from(name));
            }
        });
        if let Some(name) = bad {
            return Err(Error::ModelIntegrity(format!("non-finite values in {name}")));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.mix
                .inverse_weight()
                .map_err(|e| Error::ModelIntegrity(format!("block {i}: {e}")))?;
        }
        Ok(())
    }

    fn isn_input(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let zc = dwt(&z.slice_channels(0, CARRIER_CHANNELS))?;
        let zs = space_to_depth(&z.slice_channels(CARRIER_CHANNELS, CARRIER_CHANNELS + SECRET_CHANNELS))?;
        Tensor::concat(&[&zc, &zs])
    }

    fn isn_output_split(&self, v: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let nc = self.hyper.isn_carrier_channels();
        let carrier = iwt(&v.slice_channels(0, nc))?;
        let secret = depth_to_space(&v.slice_channels(nc, v.channels()))?;
        Ok((carrier, secret))
    }

    /// Runs all coupling blocks forward on a 28-channel wavelet-domain tensor.
    pub fn isn_forward(&self, v: &Tensor<T>) -> Tensor<T> {
        self.blocks.iter().fold(v.clone(), |acc, b| b.forward(&acc))
    }

    /// Runs all coupling blocks inverted, last block first.
    pub fn isn_inverse(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        let mut acc = v.clone();
        for b in self.blocks.iter().rev() {
            acc = b.inverse(&acc)?;
        }
        Ok(acc)
    }

    fn check_inputs(&self, carrier: &Tensor<T>, secrets: &SecretStack<T>) -> Result<()> {
        if carrier.channels() != CARRIER_CHANNELS {
            return Err(shape_err(format!("carrier must be RGB, got {} channels", carrier.channels())));
        }
        if secrets.dims() != (carrier.height(), carrier.width()) {
            return Err(shape_err(format!(
                "secrets are {:?} but carrier is {}x{}",
                secrets.dims(),
                carrier.height(),
                carrier.width()
            )));
        }
        Ok(())
    }

    /// Hides `secrets` in `carrier` (values in `[0, 1]`). Odd sizes are
    /// reflect-padded by one row/column and cropped afterwards.
    pub fn conceal(&self, carrier: &Tensor<T>, secrets: &SecretStack<T>) -> Result<Concealed<T>> {
        self.check_inputs(carrier, secrets)?;
        let (h, w) = (carrier.height(), carrier.width());
        let carrier_p = pad_even(carrier, true);
        let secrets_p = pad_even(secrets.tensor(), false);
        let x = Tensor::concat(&[&carrier_p, &secrets_p])?;
        let z = self.ffb_enc.forward(&x)?;
        let v = self.isn_forward(&self.isn_input(&z)?);
        let nc = self.hyper.isn_carrier_channels();
        let raw = crop(&iwt(&v.slice_channels(0, nc))?, h, w);
        let aux = v.slice_channels(nc, v.channels());
        Ok(Concealed {
            image: EncodedImage::from_tensor(&raw),
            raw,
            aux,
        })
    }

    /// Restores the secret channels declared by `layout` from an encoded
    /// image. `aux` substitutes the constant zero matrix when provided.
    pub fn reveal(&self, encoded: &Tensor<T>, layout: ChannelLayout, aux: Option<&Tensor<T>>) -> Result<Revealed<T>> {
        if encoded.channels() != CARRIER_CHANNELS {
            return Err(shape_err(format!("encoded image must be RGB, got {} channels", encoded.channels())));
        }
        let (h, w) = (encoded.height(), encoded.width());
        let enc = pad_even(encoded, true);
        let bands = dwt(&enc)?;
        let ns = self.hyper.isn_secret_channels();
        let fill = match aux {
            Some(a) => {
                if a.dims() != (ns, bands.height(), bands.width()) {
                    return Err(shape_err("aux matrix does not match the encoded image"));
                }
                a.clone()
            }
            None => Tensor::zeros(ns, bands.height(), bands.width()),
        };
        let v = self.isn_inverse(&Tensor::concat(&[&bands, &fill])?)?;
        let (c, s) = self.isn_output_split(&v)?;
        let out = self.ffb_dec.forward(&Tensor::concat(&[&c, &s])?)?;
        let carrier = crop(&out.slice_channels(0, CARRIER_CHANNELS), h, w);
        let secrets = crop(&out.slice_channels(CARRIER_CHANNELS, CARRIER_CHANNELS + SECRET_CHANNELS), h, w);
        Ok(Revealed {
            secrets: SecretStack::from_tensor(secrets, layout)?,
            carrier,
        })
    }

    pub fn reveal_image(&self, encoded: &EncodedImage, layout: ChannelLayout) -> Result<Revealed<T>> {
        self.reveal(&encoded.to_tensor(), layout, None)
    }

    /// One differentiable conceal + reveal pass on an even-sized sample.
    /// Gradients of the total loss are accumulated into `grad`.
    ///
    /// With `quantize`, the encoded image is rounded to the 8-bit grid with a
    /// straight-through gradient; without it the pass is smooth. It is never
    /// clamped here. The
    /// auxiliary ISN output receives no gradient.
    pub fn train_pass(
        &self,
        carrier: &Tensor<T>,
        secrets: &SecretStack<T>,
        weights: &LossWeights,
        quantize: bool,
        grad: &mut Self,
    ) -> Result<PassOutput<T>> {
        self.check_inputs(carrier, secrets)?;
        let (out, cache) = self.forward_train(carrier, secrets, quantize)?;
        let mask = secrets.layout().mask();
        let loss = loss::total(carrier, &out.encoded, secrets.tensor(), &out.restored, &mask, weights)?;
        if !loss.total.is_finite() {
            return Ok(out_with(out, loss));
        }
        self.backward_train(carrier, secrets.tensor(), &mask, weights, &out, &cache, grad)?;
        Ok(out_with(out, loss))
    }

    fn forward_train(
        &self,
        carrier: &Tensor<T>,
        secrets: &SecretStack<T>,
        quantize: bool,
    ) -> Result<(PassOutput<T>, PassCache<T>)> {
        let x = Tensor::concat(&[carrier, secrets.tensor()])?;
        let (z, ffb_enc) = self.ffb_enc.forward_cached(&x)?;
        let mut v = self.isn_input(&z)?;
        let mut forward = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, c) = b.forward_cached(&v);
            forward.push(c);
            v = next;
        }
        let nc = self.hyper.isn_carrier_channels();
        let raw = iwt(&v.slice_channels(0, nc))?;
        let encoded = if quantize { raw.map(round_to_grid) } else { raw };
        let bands = dwt(&encoded)?;
        let zeros = Tensor::zeros(self.hyper.isn_secret_channels(), bands.height(), bands.width());
        let mut u = Tensor::concat(&[&bands, &zeros])?;
        let mut inverse: Vec<Option<InverseCache<T>>> = (0..self.blocks.len()).map(|_| None).collect();
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let (next, c) = b.inverse_cached(&u)?;
            inverse[i] = Some(c);
            u = next;
        }
        let (c, s) = self.isn_output_split(&u)?;
        let (r7, ffb_dec) = self.ffb_dec.forward_cached(&Tensor::concat(&[&c, &s])?)?;
        let restored = r7.slice_channels(CARRIER_CHANNELS, CARRIER_CHANNELS + SECRET_CHANNELS);
        let cache = PassCache {
            ffb_enc,
            forward,
            inverse: inverse.into_iter().map(|c| c.expect("every block inverted")).collect(),
            ffb_dec,
        };
        let out = PassOutput {
            loss: LossBreakdown::default(),
            encoded,
            restored,
        };
        Ok((out, cache))
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_train(
        &self,
        carrier: &Tensor<T>,
        secrets: &Tensor<T>,
        mask: &[bool; SECRET_CHANNELS],
        weights: &LossWeights,
        out: &PassOutput<T>,
        cache: &PassCache<T>,
        grad: &mut Self,
    ) -> Result<()> {
        let (h, w) = (carrier.height(), carrier.width());
        // reveal branch
        let d_restored = loss::restoration_grad(secrets, &out.restored, mask, T::lit(weights.beta));
        let d_r7 = Tensor::concat(&[&Tensor::zeros(CARRIER_CHANNELS, h, w), &d_restored])?;
        let d_in = self.ffb_dec.backward(&cache.ffb_dec, &d_r7, &mut grad.ffb_dec);
        let mut du = self.isn_input_adjoint_of_split(&d_in)?;
        for (i, b) in self.blocks.iter().enumerate() {
            du = b.inverse_backward(&cache.inverse[i], &du, &mut grad.blocks[i]);
        }
        let nc = self.hyper.isn_carrier_channels();
        let mut d_encoded = iwt(&du.slice_channels(0, nc))?;
        // direct encoding loss
        d_encoded.add_assign(&loss::encoding_grad(carrier, &out.encoded, T::lit(weights.alpha))?);
        // straight-through rounding, then adjoint of iwt
        let d_bands = dwt(&d_encoded)?;
        let d_aux = Tensor::zeros(self.hyper.isn_secret_channels(), d_bands.height(), d_bands.width());
        let mut dv = Tensor::concat(&[&d_bands, &d_aux])?;
        for (i, b) in self.blocks.iter().enumerate().rev() {
            dv = b.forward_backward(&cache.forward[i], &dv, &mut grad.blocks[i]);
        }
        let dz_c = iwt(&dv.slice_channels(0, nc))?;
        let dz_s = depth_to_space(&dv.slice_channels(nc, dv.channels()))?;
        let dz = Tensor::concat(&[&dz_c, &dz_s])?;
        self.ffb_enc.backward(&cache.ffb_enc, &dz, &mut grad.ffb_enc);
        Ok(())
    }

    /// Adjoint of `isn_output_split` followed by concatenation: maps a
    /// 7-channel spatial gradient back to the 28-channel ISN layout.
    fn isn_input_adjoint_of_split(&self, d: &Tensor<T>) -> Result<Tensor<T>> {
        let dc = dwt(&d.slice_channels(0, CARRIER_CHANNELS))?;
        let ds = space_to_depth(&d.slice_channels(CARRIER_CHANNELS, CARRIER_CHANNELS + SECRET_CHANNELS))?;
        Tensor::concat(&[&dc, &ds])
    }
}

fn out_with<T>(mut out: PassOutput<T>, loss: LossBreakdown) -> PassOutput<T> {
    out.loss = loss;
    out
}

/// Extends odd dimensions by one row/column: mirrored about the last
/// row/column when `reflect`, zeros otherwise.
fn pad_even<T: Real>(t: &Tensor<T>, reflect: bool) -> Tensor<T> {
    let (c, h, w) = t.dims();
    let (ph, pw) = (h + h % 2, w + w % 2);
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    Tensor::from_fn(c, ph, pw, |ch, y, x| {
        if y < h && x < w {
            t.get(ch, y, x)
        } else if reflect {
            let mirror = |i: usize, n: usize| if i < n { i } else { n.saturating_sub(2) };
            t.get(ch, mirror(y, h), mirror(x, w))
        } else {
            T::zero()
        }
    })
}

fn crop<T: Real>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    if (t.height(), t.width()) == (h, w) {
        return t.clone();
    }
    Tensor::from_fn(t.channels(), h, w, |c, y, x| t.get(c, y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> Hyper {
        Hyper {
            n_blocks: 3,
            dense_growth: 4,
            dense_layers: 3,
            ffb_features: 6,
            ffb_blocks: 1,
            ..Hyper::default()
        }
    }

    fn random_inputs(h: usize, w: usize, seed: u64) -> (Tensor<f32>, SecretStack<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let carrier = Tensor::from_fn(3, h, w, |_, _, _| rng.gen_range(0.0..1.0));
        let d = Tensor::from_fn(1, h, w, |_, _, _| rng.gen_range(0.0..1.0));
        let q = Tensor::from_fn(1, h, w, |_, _, _| if rng.gen_bool(0.5) { 0.15 } else { 0.0 });
        let s = SecretStack::new(h, w, &[d], Some(&q)).unwrap();
        (carrier, s)
    }

    #[test]
    fn encoded_dims_equal_carrier_dims_including_odd_sizes() {
        let model = StegModel::<f32>::init(tiny(), 1).unwrap();
        for (h, w) in [(16, 16), (15, 18), (9, 7)] {
            let (c, s) = random_inputs(h, w, 2);
            let out = model.conceal(&c, &s).unwrap();
            assert_eq!((out.image.height, out.image.width), (h, w));
            assert_eq!(out.image.rgb.len(), h * w * 3);
            let rev = model.reveal_image(&out.image, s.layout()).unwrap();
            assert_eq!(rev.secrets.dims(), (h, w));
        }
    }

    #[test]
    fn reveal_with_aux_inverts_conceal_at_init() {
        let model = StegModel::<f32>::init(tiny(), 3).unwrap();
        let (c, s) = random_inputs(16, 12, 4);
        let out = model.conceal(&c, &s).unwrap();
        let rev = model.reveal(&out.raw, s.layout(), Some(&out.aux)).unwrap();
        assert!(rev.carrier.max_abs_diff(&c) <= 1e-4);
        assert!(rev.secrets.tensor().max_abs_diff(s.tensor()) <= 1e-4);
    }

    #[test]
    fn conceal_is_deterministic_for_a_seed() {
        let a = StegModel::<f32>::init(tiny(), 5).unwrap();
        let b = StegModel::<f32>::init(tiny(), 5).unwrap();
        let (c, s) = random_inputs(8, 8, 6);
        assert_eq!(a.conceal(&c, &s).unwrap().image, b.conceal(&c, &s).unwrap().image);
    }

    #[test]
    fn flat_round_trip_and_shape_table_are_consistent() {
        let model = StegModel::<f32>::init(tiny(), 7).unwrap();
        let flat = model.flat();
        let mut other = StegModel::<f32>::init(tiny(), 8).unwrap();
        assert_ne!(other, model);
        other.load_flat(&flat).unwrap();
        assert_eq!(other, model);
        let total: usize = model.shape_table().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(total, model.param_count());
    }

    #[test]
    fn singular_mix_fails_validation() {
        let mut model = StegModel::<f32>::init(tiny(), 9).unwrap();
        model.validate().unwrap();
        model.blocks[1].mix.weight.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(model.validate(), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn training_rounding_keeps_out_of_range_values() {
        assert_eq!(round_to_grid(1.2f64), 306.0 / 255.0);
        assert_eq!(round_to_grid(-0.2f64), -51.0 / 255.0);
        assert_eq!(round_to_grid(0.5f64), 128.0 / 255.0);
    }

    #[test]
    fn reveal_rejects_non_rgb_input() {
        let model = StegModel::<f32>::init(tiny(), 9).unwrap();
        let bad = Tensor::zeros(4, 8, 8);
        assert!(model.reveal(&bad, ChannelLayout::default(), None).is_err());
    }

    #[test]
    fn train_pass_gradient_matches_finite_differences() {
        let mut model = StegModel::<f64>::init(tiny(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let perturbed: Vec<f64> = model.flat().iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
        model.load_flat(&perturbed).unwrap();
        let (c, s) = random_inputs(8, 8, 13);
        let (c, s) = (c.cast::<f64>(), SecretStack::from_tensor(s.tensor().cast(), s.layout()).unwrap());
        let weights = LossWeights::default();
        let mut grad = model.zeros_like();
        model.train_pass(&c, &s, &weights, false, &mut grad).unwrap();
        let analytic = grad.flat();
        let base = model.flat();
        let loss_at = |values: &[f64]| {
            let mut m = model.clone();
            m.load_flat(values).unwrap();
            let mut g = m.zeros_like();
            m.train_pass(&c, &s, &weights, false, &mut g).unwrap().loss.total
        };
        let eps = 1e-5;
        let mut checked = 0;
        for i in (0..base.len()).step_by(base.len() / 40) {
            let mut p = base.clone();
            p[i] += eps;
            let mut m = base.clone();
            m[i] -= eps;
            let fd = (loss_at(&p) - loss_at(&m)) / (2.0 * eps);
            let scale = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!((fd - analytic[i]).abs() / scale < 1e-3, "param {i}: fd {fd} vs {}", analytic[i]);
            checked += 1;
        }
        assert!(checked >= 20);
    }
}
