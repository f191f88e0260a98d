//! Burst-fusion super-resolution model: shared shallow convolution, feature
//! alignment and fusion, dense-residual deep groups, shallow/deep skip and a
//! pixel-shuffle ×2 head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{conv_backward, conv_forward, gelu, gelu_grad, pixel_shuffle, pixel_unshuffle, ConvShape};
use super::{Scalar, TensorMap};
use crate::align::{estimate_vertical_subpixel_shift, warp_features, warp_features_backward, Plane, ShiftEstimate};
use crate::error::{Error, Result};
use crate::imageops::{resample_plane, ImageBuffer, ResizeMode};

const IMAGE_CHANNELS: usize = 3;
/// Initial scale of the output convolution relative to the default bound.
const OUT_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_frames: usize,
    pub embed_dim: usize,
    pub scale: usize,
    pub rdg_count: usize,
    pub blocks_per_group: usize,
    pub growth: usize,
    pub align_enabled: bool,
    /// Adds the bilinear ×2 upsampling of the reference frame to the output.
    pub base_skip: bool,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_frames: 3,
            embed_dim: 16,
            scale: 2,
            rdg_count: 2,
            blocks_per_group: 4,
            growth: 8,
            align_enabled: true,
            base_skip: false,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("network.{field}: {why}")));
        if self.n_frames < 3 || self.n_frames.is_multiple_of(2) {
            return bad("n_frames", "must be odd and >= 3");
        }
        if self.embed_dim < 4 {
            return bad("embed_dim", "must be >= 4");
        }
        if self.scale != 2 {
            return bad("scale", "only 2 is supported");
        }
        if self.rdg_count < 1 {
            return bad("rdg_count", "must be >= 1");
        }
        if self.blocks_per_group < 1 {
            return bad("blocks_per_group", "must be >= 1");
        }
        if self.growth < 1 {
            return bad("growth", "must be >= 1");
        }
        Ok(())
    }

    pub fn reference_index(&self) -> usize {
        self.n_frames / 2
    }
}

/// Name, shape and position of one parameter tensor in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// A convolution's shape and the offsets of its weight and (directly
/// following) bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSlot {
    pub shape: ConvShape,
    pub weight: usize,
    pub bias: usize,
}

impl ConvSlot {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight..self.weight + self.shape.weight_len()
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias..self.bias + self.shape.out_c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSlots {
    pub blocks: Vec<ConvSlot>,
    pub compress: ConvSlot,
}

/// Parameter layout derived from a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub shallow: ConvSlot,
    pub fuse: ConvSlot,
    pub groups: Vec<GroupSlots>,
    pub recon: ConvSlot,
    pub out: ConvSlot,
    pub entries: Vec<ParamEntry>,
    pub n_params: usize,
}

impl Architecture {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, in_c: usize, out_c: usize, kernel: usize| {
            let shape = ConvShape { in_c, out_c, kernel };
            let weight = offset;
            entries.push(ParamEntry {
                name: format!("{name}.weight"),
                shape: vec![out_c, in_c, kernel, kernel],
                offset,
                len: shape.weight_len(),
            });
            offset += shape.weight_len();
            let bias = offset;
            entries.push(ParamEntry {
                name: format!("{name}.bias"),
                shape: vec![out_c],
                offset,
                len: out_c,
            });
            offset += out_c;
            ConvSlot { shape, weight, bias }
        };
        let f = cfg.embed_dim;
        let shallow = add("shallow".into(), IMAGE_CHANNELS, f, 3);
        let fuse = add("fuse".into(), cfg.n_frames * f, f, 3);
        let groups = (0..cfg.rdg_count)
            .map(|g| {
                let blocks = (0..cfg.blocks_per_group)
                    .map(|b| add(format!("deep.{g}.block.{b}"), f + b * cfg.growth, cfg.growth, 3))
                    .collect();
                let compress = add(format!("deep.{g}.compress"), f + cfg.blocks_per_group * cfg.growth, f, 1);
                GroupSlots { blocks, compress }
            })
            .collect();
        let recon = add("recon.conv".into(), 2 * f, f, 3);
        let out = add(
            "recon.out".into(),
            f,
            IMAGE_CHANNELS * cfg.scale * cfg.scale,
            3,
        );
        Architecture {
            shallow,
            fuse,
            groups,
            recon,
            out,
            entries,
            n_params: offset,
        }
    }

    fn conv_slots(&self) -> Vec<ConvSlot> {
        let mut v = vec![self.shallow, self.fuse];
        for g in &self.groups {
            v.extend(&g.blocks);
            v.push(g.compress);
        }
        v.push(self.recon);
        v.push(self.out);
        v
    }
}

/// How fusion obtains the per-frame shifts.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftSource {
    /// Phase correlation on channel-mean shallow features.
    Estimate,
    /// Externally supplied constants, one per frame.
    Fixed(Vec<ShiftEstimate>),
}

#[derive(Debug, Clone)]
pub struct GroupTrace<T> {
    /// Group input followed by every block's activation.
    pub dense: TensorMap<T>,
    /// Pre-activation of each block.
    pub pre: Vec<Vec<T>>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub inputs: Vec<TensorMap<T>>,
    pub shifts: Vec<ShiftEstimate>,
    /// Non-reference frames whose correlation was degenerate (zero shift used).
    pub fallbacks: usize,
    pub concat: TensorMap<T>,
    pub fused: TensorMap<T>,
    pub groups: Vec<GroupTrace<T>>,
    pub deep: TensorMap<T>,
    pub recon_in: TensorMap<T>,
    pub recon_mid: TensorMap<T>,
    /// Unclamped `3 x 2H x 2W` prediction.
    pub output: TensorMap<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    cfg: NetworkConfig,
    arch: Architecture,
    params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Fresh model with `U(±1/sqrt(fan_in))` weights drawn from `cfg.seed`.
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let arch = Architecture::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = vec![T::zero(); arch.n_params];
        for slot in arch.conv_slots() {
            let fan_in = (slot.shape.in_c * slot.shape.kernel * slot.shape.kernel) as f64;
            let mut bound = 1.0 / fan_in.sqrt();
            if slot == arch.out {
                bound *= OUT_INIT_SCALE;
            }
            for p in &mut params[slot.weight_range()] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
            for p in &mut params[slot.bias_range()] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(Network { cfg, arch, params })
    }

    pub fn from_params(cfg: NetworkConfig, params: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        let arch = Architecture::new(&cfg);
        if params.len() != arch.n_params {
            return Err(Error::Config(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                arch.n_params
            )));
        }
        Ok(Network { cfg, arch, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.entry(name).map(|e| &self.params[e.offset..e.offset + e.len])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let e = self.entry(name)?.clone();
        Some(&mut self.params[e.offset..e.offset + e.len])
    }

    fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.arch.entries.iter().find(|e| e.name == name)
    }

    /// Same model with another element type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            cfg: self.cfg.clone(),
            arch: self.arch.clone(),
            params: self.params.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    fn conv(&self, slot: ConvSlot, x: &[T], h: usize, w: usize) -> Vec<T> {
        conv_forward(
            slot.shape,
            x,
            h,
            w,
            &self.params[slot.weight_range()],
            &self.params[slot.bias_range()],
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_back(
        &self,
        slot: ConvSlot,
        x: &[T],
        h: usize,
        w: usize,
        grad_out: &[T],
        grads: &mut [T],
        need_input: bool,
    ) -> Option<Vec<T>> {
        let (gw, gb) = grads[slot.weight..slot.bias + slot.shape.out_c].split_at_mut(slot.shape.weight_len());
        conv_backward(
            slot.shape,
            x,
            h,
            w,
            &self.params[slot.weight_range()],
            grad_out,
            gw,
            gb,
            need_input,
        )
    }

    fn map_of(&self, c: usize, h: usize, w: usize, data: Vec<T>) -> TensorMap<T> {
        TensorMap::new(c, h, w, data).expect("layer output dims")
    }

    /// Shared 3x3 convolution from 3 channels to `embed_dim`.
    pub fn shallow_extract(&self, frame: &TensorMap<T>) -> Result<TensorMap<T>> {
        let (c, h, w) = frame.dims();
        if c != IMAGE_CHANNELS {
            return Err(Error::Argument(format!("frame has {c} channels, expected 3")));
        }
        Ok(self.map_of(self.cfg.embed_dim, h, w, self.conv(self.arch.shallow, frame.data(), h, w)))
    }

    /// Shifts aligning each feature map to the reference, with the number of
    /// degenerate correlations that fell back to zero shift.
    pub fn estimate_shifts(&self, feats: &[TensorMap<T>]) -> Result<(Vec<ShiftEstimate>, usize)> {
        let r = self.cfg.reference_index();
        let (_, h, w) = feats[r].dims();
        // non-finite features carry no shift evidence; the loss reports them
        if feats.iter().any(|f| f.data().iter().any(|v| !v.to_f64().is_finite())) {
            let fallbacks = feats.len() - 1;
            return Ok((vec![ShiftEstimate::ZERO; feats.len()], fallbacks));
        }
        let reference = Plane::new(h, w, feats[r].channel_mean())?;
        let mut fallbacks = 0;
        let mut shifts = Vec::with_capacity(feats.len());
        for (i, f) in feats.iter().enumerate() {
            if i == r {
                shifts.push(ShiftEstimate::ZERO);
                continue;
            }
            let query = Plane::new(h, w, f.channel_mean())?;
            match estimate_vertical_subpixel_shift(&reference, &query) {
                Ok(s) => shifts.push(s),
                Err(Error::Degenerate(_)) => {
                    fallbacks += 1;
                    shifts.push(ShiftEstimate::ZERO);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((shifts, fallbacks))
    }

    fn warp_all(&self, feats: &[TensorMap<T>], shifts: &[ShiftEstimate]) -> Result<Vec<TensorMap<T>>> {
        feats
            .iter()
            .zip(shifts)
            .map(|(f, s)| if s.dy == 0.0 { Ok(f.clone()) } else { warp_features(f, s) })
            .collect()
    }

    /// Aligns (when enabled), concatenates and reduces `N * f` channels to
    /// `f`. Returns the fused map and the fallback count.
    pub fn fuse_features(&self, feats: &[TensorMap<T>]) -> Result<(TensorMap<T>, usize)> {
        let shifts = if self.cfg.align_enabled {
            ShiftSource::Estimate
        } else {
            ShiftSource::Fixed(vec![ShiftEstimate::ZERO; feats.len()])
        };
        let (concat, _, fallbacks) = self.align_concat(feats, &shifts)?;
        let (_, h, w) = concat.dims();
        let fused = self.map_of(self.cfg.embed_dim, h, w, self.conv(self.arch.fuse, concat.data(), h, w));
        Ok((fused, fallbacks))
    }

    fn align_concat(
        &self,
        feats: &[TensorMap<T>],
        source: &ShiftSource,
    ) -> Result<(TensorMap<T>, Vec<ShiftEstimate>, usize)> {
        if feats.len() != self.cfg.n_frames {
            return Err(Error::Config(format!(
                "model expects {} frames, got {}",
                self.cfg.n_frames,
                feats.len()
            )));
        }
        let dims = feats[0].dims();
        if feats.iter().any(|f| f.dims() != dims) {
            return Err(Error::Argument("feature maps differ in size".into()));
        }
        let (shifts, fallbacks) = match source {
            ShiftSource::Fixed(s) if s.len() == feats.len() => (s.clone(), 0),
            ShiftSource::Fixed(s) => {
                return Err(Error::Argument(format!("{} fixed shifts for {} frames", s.len(), feats.len())))
            }
            ShiftSource::Estimate if self.cfg.align_enabled => self.estimate_shifts(feats)?,
            ShiftSource::Estimate => (vec![ShiftEstimate::ZERO; feats.len()], 0),
        };
        let warped = self.warp_all(feats, &shifts)?;
        let refs: Vec<&TensorMap<T>> = warped.iter().collect();
        Ok((TensorMap::concat(&refs)?, shifts, fallbacks))
    }

    fn group_forward(&self, slots: &GroupSlots, x: &TensorMap<T>) -> (TensorMap<T>, GroupTrace<T>) {
        let (f, h, w) = x.dims();
        let n = h * w;
        let g = self.cfg.growth;
        let total = f + slots.blocks.len() * g;
        let mut dense = Vec::with_capacity(total * n);
        dense.extend_from_slice(x.data());
        let mut pre = Vec::with_capacity(slots.blocks.len());
        for slot in &slots.blocks {
            let z = self.conv(*slot, &dense, h, w);
            dense.extend(z.iter().map(|v| gelu(*v)));
            pre.push(z);
        }
        let mut out = self.conv(slots.compress, &dense, h, w);
        for (o, v) in out.iter_mut().zip(x.data()) {
            *o += *v;
        }
        let dense = self.map_of(total, h, w, dense);
        (self.map_of(f, h, w, out), GroupTrace { dense, pre })
    }

    /// Residual dense groups applied in sequence.
    pub fn deep_extract(&self, x: &TensorMap<T>) -> TensorMap<T> {
        let mut cur = x.clone();
        for slots in &self.arch.groups {
            cur = self.group_forward(slots, &cur).0;
        }
        cur
    }

    /// Concatenates shallow and deep features and maps them to an unclamped
    /// `3 x 2H x 2W` image.
    pub fn reconstruct(&self, shallow: &TensorMap<T>, deep: &TensorMap<T>) -> Result<TensorMap<T>> {
        let recon_in = TensorMap::concat(&[shallow, deep])?;
        Ok(self.reconstruct_parts(&recon_in).1)
    }

    fn reconstruct_parts(&self, recon_in: &TensorMap<T>) -> (TensorMap<T>, TensorMap<T>) {
        let (_, h, w) = recon_in.dims();
        let mid = self.map_of(self.cfg.embed_dim, h, w, self.conv(self.arch.recon, recon_in.data(), h, w));
        let pre = self.map_of(self.arch.out.shape.out_c, h, w, self.conv(self.arch.out, mid.data(), h, w));
        (mid, pixel_shuffle(&pre, self.cfg.scale))
    }

    fn base_image(&self, reference: &TensorMap<T>) -> Result<Vec<T>> {
        let (c, h, w) = reference.dims();
        let s = self.cfg.scale;
        let mut out = Vec::with_capacity(c * h * w * s * s);
        for k in 0..c {
            let plane: Vec<f64> = reference.data()[k * h * w..(k + 1) * h * w].iter().map(|v| v.to_f64()).collect();
            let up = resample_plane(&plane, h, w, h * s, w * s, ResizeMode::Bilinear)?;
            out.extend(up.into_iter().map(T::from_f64));
        }
        Ok(out)
    }

    /// Full forward pass keeping every activation needed by [`Self::backward`].
    pub fn forward_trace(&self, frames: &[TensorMap<T>], source: &ShiftSource) -> Result<Trace<T>> {
        if frames.len() != self.cfg.n_frames {
            return Err(Error::Config(format!(
                "model expects {} frames, got {}",
                self.cfg.n_frames,
                frames.len()
            )));
        }
        let shallow = frames.iter().map(|f| self.shallow_extract(f)).collect::<Result<Vec<_>>>()?;
        let (concat, shifts, fallbacks) = self.align_concat(&shallow, source)?;
        let (_, h, w) = concat.dims();
        let fused = self.map_of(self.cfg.embed_dim, h, w, self.conv(self.arch.fuse, concat.data(), h, w));
        let mut groups = Vec::with_capacity(self.arch.groups.len());
        let mut cur = fused.clone();
        for slots in &self.arch.groups {
            let (next, trace) = self.group_forward(slots, &cur);
            groups.push(trace);
            cur = next;
        }
        let deep = cur;
        let recon_in = TensorMap::concat(&[&fused, &deep])?;
        let (recon_mid, mut output) = self.reconstruct_parts(&recon_in);
        if self.cfg.base_skip {
            let base = self.base_image(&frames[self.cfg.reference_index()])?;
            for (o, b) in output.data_mut().iter_mut().zip(base) {
                *o += b;
            }
        }
        Ok(Trace {
            inputs: frames.to_vec(),
            shifts,
            fallbacks,
            concat,
            fused,
            groups,
            deep,
            recon_in,
            recon_mid,
            output,
        })
    }

    /// Parameter gradient for `grad_output = dLoss/dOutput`. Shifts are
    /// treated as constants.
    pub fn backward(&self, trace: &Trace<T>, grad_output: &TensorMap<T>) -> Vec<T> {
        let mut grads = vec![T::zero(); self.arch.n_params];
        let (_, h, w) = trace.fused.dims();
        let f = self.cfg.embed_dim;
        let n = h * w;

        let g_pre = pixel_unshuffle(grad_output, self.cfg.scale);
        let g_mid = self
            .conv_back(self.arch.out, trace.recon_mid.data(), h, w, g_pre.data(), &mut grads, true)
            .expect("input grad");
        let g_recon_in = self
            .conv_back(self.arch.recon, trace.recon_in.data(), h, w, &g_mid, &mut grads, true)
            .expect("input grad");
        let (g_shallow_skip, g_deep) = g_recon_in.split_at(f * n);

        let mut g_cur = g_deep.to_vec();
        for (slots, gt) in self.arch.groups.iter().zip(&trace.groups).rev() {
            let total = gt.dense.channels();
            let mut g_dense = self
                .conv_back(slots.compress, gt.dense.data(), h, w, &g_cur, &mut grads, true)
                .expect("input grad");
            debug_assert_eq!(g_dense.len(), total * n);
            for (b, slot) in slots.blocks.iter().enumerate().rev() {
                let in_c = slot.shape.in_c;
                let g_out = &g_dense[in_c * n..(in_c + self.cfg.growth) * n];
                let g_z: Vec<T> = g_out.iter().zip(&gt.pre[b]).map(|(g, z)| *g * gelu_grad(*z)).collect();
                let g_in = self
                    .conv_back(*slot, &gt.dense.data()[..in_c * n], h, w, &g_z, &mut grads, true)
                    .expect("input grad");
                for (d, s) in g_dense[..in_c * n].iter_mut().zip(&g_in) {
                    *d += *s;
                }
            }
            // residual path plus the group input's share of the dense buffer
            for (c, d) in g_cur.iter_mut().zip(&g_dense[..f * n]) {
                *c += *d;
            }
        }
        for (c, s) in g_cur.iter_mut().zip(g_shallow_skip) {
            *c += *s;
        }
        let g_fused = g_cur;

        let g_concat = self
            .conv_back(self.arch.fuse, trace.concat.data(), h, w, &g_fused, &mut grads, true)
            .expect("input grad");
        for (i, (input, shift)) in trace.inputs.iter().zip(&trace.shifts).enumerate() {
            let g_warped = self.map_of(f, h, w, g_concat[i * f * n..(i + 1) * f * n].to_vec());
            let g_feat = if shift.dy == 0.0 {
                g_warped
            } else {
                warp_features_backward(&g_warped, shift)
            };
            self.conv_back(self.arch.shallow, input.data(), h, w, g_feat.data(), &mut grads, false);
        }
        grads
    }

    /// Inference on image frames: returns the clamped ×2 image and the number
    /// of alignment fallbacks.
    pub fn enhance(&self, frames: &[ImageBuffer]) -> Result<(ImageBuffer, usize)> {
        let maps: Vec<TensorMap<T>> = frames.iter().map(TensorMap::from_image).collect();
        let trace = self.forward_trace(&maps, &ShiftSource::Estimate)?;
        Ok((trace.output.to_image()?, trace.fallbacks))
    }
}
