//! Dense score-map container and its on-disk format.
//!
//! File layout (all little-endian): magic `PWT1`, then `height`, `width`,
//! `channels` as `u32`, then `height * width * channels` IEEE-754 `f32`
//! values in row-major `(row, column, channel)` order. No padding, no
//! checksum. Offset channels of a neighbor map hold pixels of the grid they
//! are stored on.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::body::{JointType, NUM_JOINTS, NUM_PARTS};
use crate::error::{Error, Result};
use crate::geometry::Rect;

pub const MAGIC: &[u8; 4] = b"PWT1";
pub const HEADER_LEN: usize = 16;
pub const NEIGHBOR_CHANNELS: usize = NUM_JOINTS * (NUM_JOINTS - 1) * 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::argument(format!(
                "tensor dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::argument(format!(
                "tensor data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Tensor3 {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "tensor dims must be positive");
        Tensor3 {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.offset(row, col) + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let o = self.offset(row, col);
        self.data[o + ch] = v;
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let o = self.offset(row, col);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// Whole grid as a rectangle over pixel centers.
    pub fn extent(&self) -> Rect {
        Rect::new(0.0, 0.0, (self.width - 1) as f64, (self.height - 1) as f64)
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear sample of every channel at `(x, y)`, clamping to the grid.
    pub fn sample_into(&self, x: f64, y: f64, out: &mut [f32]) {
        let taps = BilinearTaps::new(x, self.width);
        let rows = BilinearTaps::new(y, self.height);
        let p00 = self.pixel(rows.i0, taps.i0);
        let p01 = self.pixel(rows.i0, taps.i1);
        let p10 = self.pixel(rows.i1, taps.i0);
        let p11 = self.pixel(rows.i1, taps.i1);
        let (wx, wy) = (taps.frac as f32, rows.frac as f32);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = p00[c] + (p01[c] - p00[c]) * wx;
            let bot = p10[c] + (p11[c] - p10[c]) * wx;
            *o = top + (bot - top) * wy;
        }
    }

    /// Bilinear sample of one channel at `(x, y)`, clamping to the grid.
    pub fn sample(&self, x: f64, y: f64, ch: usize) -> f64 {
        let taps = BilinearTaps::new(x, self.width);
        let rows = BilinearTaps::new(y, self.height);
        let v00 = self.get(rows.i0, taps.i0, ch) as f64;
        let v01 = self.get(rows.i0, taps.i1, ch) as f64;
        let v10 = self.get(rows.i1, taps.i0, ch) as f64;
        let v11 = self.get(rows.i1, taps.i1, ch) as f64;
        let top = v00 + (v01 - v00) * taps.frac;
        let bot = v10 + (v11 - v10) * taps.frac;
        top + (bot - top) * rows.frac
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::format(
                "data",
                format!("non-finite value {} at element {i}", self.data[i]),
            )),
            None => Ok(()),
        }
    }
}

struct BilinearTaps {
    i0: usize,
    i1: usize,
    frac: f64,
}

impl BilinearTaps {
    #[inline]
    fn new(coord: f64, len: usize) -> Self {
        let max = (len - 1) as f64;
        let c = coord.clamp(0.0, max);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        BilinearTaps {
            i0,
            i1,
            frac: c - i0 as f64,
        }
    }
}

/// Channel of the neighbor map holding the `axis` (0 = δx, 1 = δy) offset
/// from a joint of type `from` to its `to` neighbor.
pub fn neighbor_channel(from: JointType, to: JointType, axis: usize) -> usize {
    debug_assert!(from != to && axis < 2);
    let (k, j) = (from.index(), to.index());
    let slot = if j < k { j } else { j - 1 };
    k * (NUM_JOINTS - 1) * 2 + slot * 2 + axis
}

/// Joint scores, neighbor offsets, and part scores over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMapSet {
    pub joints: Tensor3,
    pub neighbors: Tensor3,
    pub parts: Tensor3,
}

impl ScoreMapSet {
    pub fn new(joints: Tensor3, neighbors: Tensor3, parts: Tensor3) -> Result<Self> {
        let set = ScoreMapSet {
            joints,
            neighbors,
            parts,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn height(&self) -> usize {
        self.joints.height
    }

    pub fn width(&self) -> usize {
        self.joints.width
    }

    pub fn validate(&self) -> Result<()> {
        let expect = [
            ("joints", &self.joints, NUM_JOINTS),
            ("neighbors", &self.neighbors, NEIGHBOR_CHANNELS),
            ("parts", &self.parts, NUM_PARTS),
        ];
        for (name, t, ch) in expect {
            if t.channels != ch {
                return Err(Error::argument(format!(
                    "{name} map has {} channels, expected {ch}",
                    t.channels
                )));
            }
            if t.height != self.joints.height || t.width != self.joints.width {
                return Err(Error::argument(format!(
                    "{name} map is {}x{}, joints map is {}x{}",
                    t.height, t.width, self.joints.height, self.joints.width
                )));
            }
        }
        for (name, t) in [("joints", &self.joints), ("parts", &self.parts)] {
            if let Some(v) = t.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::argument(format!("{name} score {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-pixel integer labels; for part maps 0 is background and 1–6 follow
/// [`crate::body::Part`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u16>,
}

pub type PartLabelMap = LabelMap;

impl LabelMap {
    pub fn new(height: usize, width: usize) -> Self {
        LabelMap {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: u16) {
        self.labels[row * self.width + col] = label;
    }

    /// Label at integer pixel `(col, row)`, or `None` off the grid.
    pub fn at(&self, col: i64, row: i64) -> Option<u16> {
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then(|| self.get(row as usize, col as usize))
    }

    /// Single-channel tensor with labels stored as floats.
    pub fn to_tensor(&self) -> Tensor3 {
        let data = self.labels.iter().map(|&l| l as f32).collect();
        Tensor3::new(self.height, self.width, 1, data).expect("label map dims are positive")
    }

    pub fn from_tensor(t: &Tensor3) -> Result<Self> {
        if t.channels != 1 {
            return Err(Error::format("channels", "label map must have one channel"));
        }
        let labels = t
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u16::MAX as f32 {
                    Ok(v as u16)
                } else {
                    Err(Error::format("data", format!("{v} is not a label")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(LabelMap {
            height: t.height,
            width: t.width,
            labels,
        })
    }
}

pub fn save_tensor<W: Write>(t: &Tensor3, mut sink: W) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + t.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    for d in [t.height, t.width, t.channels] {
        let d = u32::try_from(d).map_err(|_| Error::argument("tensor dim exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

pub fn load_tensor<R: Read>(mut source: R) -> Result<Tensor3> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match source.read(&mut header[got..])? {
            0 => break,
            n => got += n,
        }
    }
    if got < 4 || &header[..4] != MAGIC {
        return Err(Error::format("magic", "expected `PWT1`"));
    }
    if got < HEADER_LEN {
        return Err(Error::format("header", "truncated dimension header"));
    }
    let dim = |i: usize, name: &'static str| -> Result<usize> {
        let v = u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if v == 0 {
            return Err(Error::format(name, "must be at least 1"));
        }
        Ok(v)
    };
    let (height, width, channels) = (dim(0, "height")?, dim(1, "width")?, dim(2, "channels")?);
    let count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("header", "element count overflows"))?;
    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    if payload.len() < count * 4 {
        return Err(Error::format(
            "data",
            format!("truncated payload: {} of {} bytes", payload.len(), count * 4),
        ));
    }
    if payload.len() > count * 4 {
        return Err(Error::format(
            "data",
            format!("{} trailing bytes", payload.len() - count * 4),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let t = Tensor3 {
        height,
        width,
        channels,
        data,
    };
    t.check_finite()?;
    Ok(t)
}

pub fn write_tensor_file(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    save_tensor(t, BufWriter::new(File::create(path)?))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor3> {
    load_tensor(BufReader::new(File::open(path)?))
}

/// Per pixel, the lowest channel index attaining the maximum score.
pub fn argmax_channel(t: &Tensor3) -> LabelMap {
    let mut out = LabelMap::new(t.height, t.width);
    for (label, px) in out.labels.iter_mut().zip(t.data.chunks_exact(t.channels)) {
        let mut best = 0;
        for (c, &v) in px.iter().enumerate().skip(1) {
            if v > px[best] {
                best = c;
            }
        }
        *label = best as u16;
    }
    out
}

/// Bilinearly resamples `bounds` (pixel-center coordinates; corners map to
/// corners) to an `out_h × out_w` grid. Samples outside the source clamp to
/// the nearest valid pixel.
pub fn crop_resize(t: &Tensor3, bounds: Rect, out_h: usize, out_w: usize) -> Result<Tensor3> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::argument("output dims must be positive"));
    }
    if !bounds.is_finite() || bounds.w < 0.0 || bounds.h < 0.0 {
        return Err(Error::argument(format!("empty crop box {bounds:?}")));
    }
    if bounds.intersect(&t.extent()).is_none() {
        return Err(Error::argument(format!(
            "crop box {bounds:?} misses the {}x{} grid",
            t.height, t.width
        )));
    }
    let step = |len: f64, n: usize| if n > 1 { len / (n - 1) as f64 } else { 0.0 };
    let (sy, sx) = (step(bounds.h, out_h), step(bounds.w, out_w));
    let cols: Vec<BilinearTaps> = (0..out_w)
        .map(|c| BilinearTaps::new(bounds.x + c as f64 * sx, t.width))
        .collect();
    let mut data = vec![0f32; out_h * out_w * t.channels];
    let ch = t.channels;
    for r in 0..out_h {
        let row = BilinearTaps::new(bounds.y + r as f64 * sy, t.height);
        let wy = row.frac as f32;
        for (c, col) in cols.iter().enumerate() {
            let wx = col.frac as f32;
            let p00 = t.pixel(row.i0, col.i0);
            let p01 = t.pixel(row.i0, col.i1);
            let p10 = t.pixel(row.i1, col.i0);
            let p11 = t.pixel(row.i1, col.i1);
            let dst = &mut data[(r * out_w + c) * ch..(r * out_w + c + 1) * ch];
            for k in 0..ch {
                let top = p00[k] + (p01[k] - p00[k]) * wx;
                let bot = p10[k] + (p11[k] - p10[k]) * wx;
                dst[k] = top + (bot - top) * wy;
            }
        }
    }
    Tensor3::new(out_h, out_w, ch, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcg_tensor(h: usize, w: usize, c: usize, seed: u64) -> Tensor3 {
        let mut s = seed;
        let data = (0..h * w * c)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 48) as f32 / 65536.0
            })
            .collect();
        Tensor3::new(h, w, c, data).unwrap()
    }

    fn encode(t: &Tensor3) -> Vec<u8> {
        let mut buf = Vec::new();
        save_tensor(t, &mut buf).unwrap();
        buf
    }

    #[test]
    fn zero_tensor_bytes() {
        let buf = encode(&Tensor3::zeros(1, 1, 1));
        assert_eq!(buf.len(), 20);
        assert_eq!(&buf[..4], b"PWT1");
        assert_eq!(&buf[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&buf[16..], &[0, 0, 0, 0]);
    }

    #[test]
    fn file_size_matches_format() {
        assert_eq!(encode(&lcg_tensor(2, 3, 7, 9)).len(), 16 + 2 * 3 * 7 * 4);
    }

    #[test]
    fn load_rejects_bad_input() {
        let good = encode(&lcg_tensor(2, 2, 2, 1));
        let err = |bytes: &[u8]| match load_tensor(bytes) {
            Err(Error::Format { field, .. }) => field,
            other => panic!("expected format error, got {other:?}"),
        };
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert_eq!(err(&bad_magic), "magic");
        assert_eq!(err(&good[..10]), "header");
        assert_eq!(err(&good[..good.len() - 1]), "data");
        let mut nan = good.clone();
        nan[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(err(&nan), "data");
        let mut zero_dim = good.clone();
        zero_dim[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(err(&zero_dim), "width");
    }

    #[test]
    fn argmax_unique_and_ties() {
        let mut scores = vec![0.0f32; 7];
        scores[0] = 0.1;
        scores[1] = 0.9;
        let t = Tensor3::new(1, 1, 7, scores).unwrap();
        assert_eq!(argmax_channel(&t).labels, vec![1]);
        let flat = Tensor3::filled(3, 2, 7, 0.25);
        assert!(argmax_channel(&flat).labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let t = lcg_tensor(5, 5, 7, 77);
        let got = argmax_channel(&t);
        for r in 0..5 {
            for c in 0..5 {
                let mut best = 0;
                let mut best_v = f32::NEG_INFINITY;
                for k in 0..7 {
                    if t.get(r, c, k) > best_v {
                        best_v = t.get(r, c, k);
                        best = k;
                    }
                }
                assert_eq!(got.get(r, c) as usize, best);
            }
        }
    }

    #[test]
    fn crop_resize_identity() {
        let t = lcg_tensor(6, 4, 3, 5);
        let out = crop_resize(&t, t.extent(), 6, 4).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn crop_resize_hand_bilinear() {
        let t = Tensor3::new(2, 2, 1, vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        let out = crop_resize(&t, t.extent(), 3, 3).unwrap();
        assert!((out.get(1, 1, 0) - 1.0).abs() < 1e-6);
        assert_eq!(out.get(2, 2, 0), 4.0);
    }

    #[test]
    fn crop_resize_errors() {
        let t = Tensor3::zeros(4, 4, 1);
        assert!(crop_resize(&t, Rect::new(0.0, 0.0, -1.0, 2.0), 2, 2).is_err());
        assert!(crop_resize(&t, Rect::new(10.0, 10.0, 2.0, 2.0), 2, 2).is_err());
        assert!(crop_resize(&t, t.extent(), 0, 2).is_err());
    }

    #[test]
    fn neighbor_channel_layout() {
        use JointType::*;
        assert_eq!(neighbor_channel(Forehead, Neck, 0), 0);
        assert_eq!(neighbor_channel(Forehead, Neck, 1), 1);
        assert_eq!(neighbor_channel(Neck, Forehead, 0), 26);
        assert_eq!(neighbor_channel(Neck, LShoulder, 1), 26 + 3);
        assert_eq!(neighbor_channel(RAnkle, LAnkle, 1), NEIGHBOR_CHANNELS - 1);
    }

    #[test]
    fn label_map_tensor_round_trip() {
        let mut m = LabelMap::new(2, 3);
        m.set(1, 2, 6);
        m.set(0, 1, 3);
        assert_eq!(LabelMap::from_tensor(&m.to_tensor()).unwrap(), m);
        let bad = Tensor3::new(1, 1, 1, vec![0.5]).unwrap();
        assert!(LabelMap::from_tensor(&bad).is_err());
    }

    proptest! {
        #[test]
        fn save_load_round_trip(h in 1usize..5, w in 1usize..5, c in 1usize..4,
                                vals in proptest::collection::vec(-1e6f32..1e6, 64)) {
            let data = (0..h * w * c).map(|i| vals[i % vals.len()]).collect();
            let t = Tensor3::new(h, w, c, data).unwrap();
            let back = load_tensor(encode(&t).as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn argmax_shift_invariant(seed in any::<u64>(), shift in -0.5f32..0.5) {
            let t = lcg_tensor(3, 3, 7, seed);
            let mut shifted = t.clone();
            for (i, px) in shifted.data_mut().chunks_exact_mut(7).enumerate() {
                // Dyadic per-pixel constant keeps the addition exact.
                let k = ((shift * 8.0).round() / 8.0) * (i as f32 % 3.0);
                px.iter_mut().for_each(|v| *v += k);
            }
            prop_assert_eq!(argmax_channel(&shifted), argmax_channel(&t));
        }

        #[test]
        fn crop_resize_bounded(seed in any::<u64>(), x in -2.0f64..4.0, y in -2.0f64..4.0,
                               w in 0.0f64..6.0, h in 0.0f64..6.0, oh in 1usize..9, ow in 1usize..9) {
            let t = lcg_tensor(5, 5, 2, seed);
            prop_assume!(Rect::new(x, y, w, h).intersect(&t.extent()).is_some());
            let out = crop_resize(&t, Rect::new(x, y, w, h), oh, ow).unwrap();
            let (lo, hi) = t.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
            let c = crop_resize(&Tensor3::filled(5, 5, 1, 0.375), Rect::new(x, y, w, h), oh, ow).unwrap();
            prop_assert!(c.data().iter().all(|&v| v == 0.375));
        }
    }
}
