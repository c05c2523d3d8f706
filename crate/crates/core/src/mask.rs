//! Binary masks: run-length codes and a bounding-box bitmap used for
//! set operations in a larger image frame.

use crate::error::{Error, Result};

/// Row-major run lengths alternating background / foreground, starting with a
/// (possibly zero) background run. Runs sum to the bitmap length.
pub fn rle_encode(bits: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    if len > 0 || runs.is_empty() {
        runs.push(len);
    }
    runs
}

pub fn rle_decode(runs: &[u32], len: usize) -> Result<Vec<bool>> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != len as u64 {
        return Err(Error::invalid(format!("runs sum to {total}, expected {len}")));
    }
    let mut bits = Vec::with_capacity(len);
    for (k, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(k % 2 == 1, r as usize));
    }
    Ok(bits)
}

/// Axis-aligned pixel rectangle `[x0, x0+w) x [y0, y0+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, w: u32, h: u32) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn x1(&self) -> u32 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> u32 {
        self.y0 + self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.x0 <= x && x < self.x1() && self.y0 <= y && y < self.y1()
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        let x0 = self.x0.max(o.x0);
        let y0 = self.y0.max(o.y0);
        let x1 = self.x1().min(o.x1());
        let y1 = self.y1().min(o.y1());
        if x1 <= x0 || y1 <= y0 {
            Rect::new(x0, y0, 0, 0)
        } else {
            Rect::new(x0, y0, x1 - x0, y1 - y0)
        }
    }

    pub fn union(&self, o: &Rect) -> Rect {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        let x0 = self.x0.min(o.x0);
        let y0 = self.y0.min(o.y0);
        Rect::new(x0, y0, self.x1().max(o.x1()) - x0, self.y1().max(o.y1()) - y0)
    }
}

/// A binary mask inside a `frame_w x frame_h` image, stored densely over its
/// tight bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    frame_w: u32,
    frame_h: u32,
    bbox: Rect,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn empty(frame_w: u32, frame_h: u32) -> Self {
        Self {
            frame_w,
            frame_h,
            bbox: Rect::new(0, 0, 0, 0),
            bits: Vec::new(),
        }
    }

    /// From a full-frame row-major bitmap.
    pub fn from_dense(frame_w: u32, frame_h: u32, dense: &[bool]) -> Result<Self> {
        if dense.len() != frame_w as usize * frame_h as usize {
            return Err(Error::invalid("bitmap length does not match frame"));
        }
        let fw = frame_w as usize;
        Ok(Self::from_pixels(
            frame_w,
            frame_h,
            dense
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| ((i % fw) as u32, (i / fw) as u32)),
        ))
    }

    /// From foreground pixel coordinates (duplicates allowed). Panics on
    /// coordinates outside the frame.
    pub fn from_pixels(frame_w: u32, frame_h: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let pixels: Vec<(u32, u32)> = pixels.into_iter().collect();
        if pixels.is_empty() {
            return Self::empty(frame_w, frame_h);
        }
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pixels {
            assert!(x < frame_w && y < frame_h, "pixel ({x}, {y}) outside {frame_w}x{frame_h}");
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let bbox = Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
        let mut bits = vec![false; bbox.area() as usize];
        for (x, y) in pixels {
            bits[((y - y0) * bbox.w + (x - x0)) as usize] = true;
        }
        Self { frame_w, frame_h, bbox, bits }
    }

    pub fn from_rle(frame_w: u32, frame_h: u32, runs: &[u32]) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let len = frame_w as u64 * frame_h as u64;
        if total != len {
            return Err(Error::invalid(format!("runs sum to {total}, expected {len}")));
        }
        let mut pixels = Vec::new();
        let mut pos = 0u64;
        for (k, &r) in runs.iter().enumerate() {
            if k % 2 == 1 {
                for p in pos..pos + r as u64 {
                    pixels.push(((p % frame_w as u64) as u32, (p / frame_w as u64) as u32));
                }
            }
            pos += r as u64;
        }
        Ok(Self::from_pixels(frame_w, frame_h, pixels))
    }

    /// Full-frame run-length code.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut fg = false;
        let mut len = 0u64;
        let mut last_end = 0u64;
        let fw = self.frame_w as u64;
        // walk foreground spans in row-major order
        for y in 0..self.bbox.h {
            let row = &self.bits[(y * self.bbox.w) as usize..((y + 1) * self.bbox.w) as usize];
            let mut x = 0usize;
            while x < row.len() {
                if !row[x] {
                    x += 1;
                    continue;
                }
                let start = x;
                while x < row.len() && row[x] {
                    x += 1;
                }
                let s = (self.bbox.y0 + y) as u64 * fw + self.bbox.x0 as u64 + start as u64;
                let e = s + (x - start) as u64;
                if fg && s == last_end {
                    len += e - s;
                } else {
                    if fg {
                        runs.push(len as u32);
                    }
                    runs.push((s - last_end) as u32);
                    fg = true;
                    len = e - s;
                }
                last_end = e;
            }
        }
        if fg {
            runs.push(len as u32);
        }
        let total = fw * self.frame_h as u64;
        if last_end < total || runs.is_empty() {
            runs.push((total - last_end) as u32);
        }
        runs
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut out = vec![false; self.frame_w as usize * self.frame_h as usize];
        for (x, y) in self.pixels() {
            out[y as usize * self.frame_w as usize + x as usize] = true;
        }
        out
    }

    pub fn frame(&self) -> (u32, u32) {
        (self.frame_w, self.frame_h)
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bbox.contains(x, y) && self.bits[((y - self.bbox.y0) * self.bbox.w + (x - self.bbox.x0)) as usize]
    }

    /// Foreground pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = self.bbox;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (b.x0 + i as u32 % b.w, b.y0 + i as u32 / b.w))
    }

    /// Row-major foreground bits over the bounding box.
    pub fn bbox_bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_in(&self, r: &Rect) -> u64 {
        let q = self.bbox.intersect(r);
        let mut n = 0;
        for y in q.y0..q.y1() {
            for x in q.x0..q.x1() {
                n += self.get(x, y) as u64;
            }
        }
        n
    }

    /// `(|A ∩ B ∩ r|, |(A ∪ B) ∩ r|)`.
    pub fn overlap_in(&self, other: &BitMask, r: &Rect) -> (u64, u64) {
        let q = self.bbox.union(&other.bbox).intersect(r);
        let (mut inter, mut uni) = (0, 0);
        for y in q.y0..q.y1() {
            for x in q.x0..q.x1() {
                let (a, b) = (self.get(x, y), other.get(x, y));
                inter += (a && b) as u64;
                uni += (a || b) as u64;
            }
        }
        (inter, uni)
    }

    pub fn union(&self, other: &BitMask) -> BitMask {
        assert_eq!(self.frame(), other.frame(), "union across frames");
        Self::from_pixels(self.frame_w, self.frame_h, self.pixels().chain(other.pixels()))
    }

    /// Moves the mask by `(dx, dy)` into a new frame. Fails if any pixel falls outside.
    pub fn translate(&self, dx: u32, dy: u32, frame_w: u32, frame_h: u32) -> Result<BitMask> {
        if !self.is_empty() && (self.bbox.x1() + dx > frame_w || self.bbox.y1() + dy > frame_h) {
            return Err(Error::invalid("translated mask leaves the target frame"));
        }
        let mut out = self.clone();
        out.frame_w = frame_w;
        out.frame_h = frame_h;
        out.bbox.x0 += dx;
        out.bbox.y0 += dy;
        if out.is_empty() {
            out.bbox = Rect::new(0, 0, 0, 0);
        }
        Ok(out)
    }

    /// Restriction to `r`, expressed in `r`'s local frame.
    pub fn crop(&self, r: &Rect) -> BitMask {
        let pixels: Vec<(u32, u32)> = self
            .pixels()
            .filter(|&(x, y)| r.contains(x, y))
            .map(|(x, y)| (x - r.x0, y - r.y0))
            .collect();
        Self::from_pixels(r.w, r.h, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn center_pixel_rle() {
        let mut bits = vec![false; 9];
        bits[4] = true;
        assert_eq!(rle_encode(&bits), vec![4, 1, 4]);
        let m = BitMask::from_dense(3, 3, &bits).unwrap();
        assert_eq!(m.to_rle(), vec![4, 1, 4]);
    }

    #[test]
    fn rle_edge_cases() {
        assert_eq!(rle_encode(&[true, true, false]), vec![0, 2, 1]);
        assert_eq!(rle_encode(&[false, false]), vec![2]);
        assert_eq!(rle_encode(&[]), vec![0]);
        assert!(rle_decode(&[1, 2], 4).is_err());
        assert_eq!(BitMask::empty(2, 2).to_rle(), vec![4]);
        assert_eq!(BitMask::from_dense(2, 1, &[true, true]).unwrap().to_rle(), vec![0, 2]);
    }

    #[test]
    fn spans_merge_across_rows() {
        // last pixel of row 0 and first of row 1 are contiguous in row-major order
        let m = BitMask::from_pixels(3, 2, [(2, 0), (0, 1)]);
        assert_eq!(m.to_rle(), vec![2, 2, 2]);
    }

    #[test]
    fn overlap_and_crop() {
        let a = BitMask::from_pixels(10, 10, (0..5).map(|x| (x, 2)));
        let b = BitMask::from_pixels(10, 10, (3..8).map(|x| (x, 2)));
        assert_eq!(a.overlap_in(&b, &Rect::new(0, 0, 10, 10)), (2, 8));
        assert_eq!(a.overlap_in(&b, &Rect::new(3, 0, 2, 10)), (2, 2));
        let c = a.crop(&Rect::new(2, 2, 4, 1));
        assert_eq!(c.frame(), (4, 1));
        assert_eq!(c.area(), 3);
        let t = c.translate(2, 2, 10, 10).unwrap();
        assert_eq!(t.pixels().collect::<Vec<_>>(), vec![(2, 2), (3, 2), (4, 2)]);
        assert!(c.translate(8, 0, 10, 10).is_err());
    }

    fn bitmap() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
        (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(any::<bool>(), (w * h) as usize))
        })
    }

    proptest! {
        #[test]
        fn rle_round_trip((w, h, bits) in bitmap()) {
            let runs = rle_encode(&bits);
            prop_assert_eq!(runs.iter().map(|&r| r as usize).sum::<usize>(), bits.len());
            prop_assert_eq!(&rle_decode(&runs, bits.len()).unwrap(), &bits);
            let m = BitMask::from_rle(w, h, &runs).unwrap();
            prop_assert_eq!(m.to_rle(), runs);
            prop_assert_eq!(m.to_dense(), bits);
        }
    }
}
