//! Moving-digit video sequences.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, Entry, EntryKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A clip of `T` grayscale frames, `[T × H × W]`, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Tensor<f32>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, t: usize) -> Result<Tensor<f32>> {
        self.frames.index_leading(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MovingDigits {
    pub size: usize,
    pub frames: usize,
    pub digits: usize,
    /// Per-axis speed is drawn from `-max_speed..=max_speed`.
    pub max_speed: i32,
}

impl Default for MovingDigits {
    fn default() -> Self {
        MovingDigits {
            size: 64,
            frames: 15,
            digits: 2,
            max_speed: 3,
        }
    }
}

/// A glyph's top-left corner and integer velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sprite {
    pub x: i32,
    pub y: i32,
    pub vx: i32,
    pub vy: i32,
}

fn reflect(p: &mut i32, v: &mut i32, max: i32) {
    *p += *v;
    if max == 0 {
        *p = 0;
        return;
    }
    // A fast sprite can bounce more than once per step.
    while *p < 0 || *p > max {
        if *p < 0 {
            *p = -*p;
        } else {
            *p = 2 * max - *p;
        }
        *v = -*v;
    }
}

impl Sprite {
    /// Moves one step, bouncing off the walls of `[0, max_x] × [0, max_y]`.
    pub fn advance(&mut self, max_x: i32, max_y: i32) {
        reflect(&mut self.x, &mut self.vx, max_x);
        reflect(&mut self.y, &mut self.vy, max_y);
    }
}

const FONT: [[&str; 7]; 10] = [
    [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".###.", "#...#", "....#", "..##.", ".#...", "#....", "#####"],
    [".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."],
    ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    [".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."],
    ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
];

/// Built-in digit-like glyphs `0`–`9`, each `[px × px]` with a soft edge.
pub fn builtin_glyphs(px: usize) -> Vec<Tensor<f32>> {
    let px = px.max(2);
    FONT.iter()
        .map(|rows| {
            // Sample the 5×7 bitmap in a centred 5:7 box, averaging a 3×3
            // sub-grid per pixel for anti-aliasing.
            let h = px as f32;
            let w = h * 5.0 / 7.0;
            let x0 = (h - w) / 2.0;
            Tensor::from_fn(&[px, px], |i| {
                let (r, c) = (i / px, i % px);
                let mut acc = 0.0;
                for sy in 0..3 {
                    for sx in 0..3 {
                        let fy = (r as f32 + (sy as f32 + 0.5) / 3.0) / h * 7.0;
                        let fx = (c as f32 + (sx as f32 + 0.5) / 3.0 - x0) / w * 5.0;
                        if (0.0..5.0).contains(&fx) && (0.0..7.0).contains(&fy) {
                            let on = rows[fy as usize].as_bytes()[fx as usize] == b'#';
                            acc += f32::from(u8::from(on));
                        }
                    }
                }
                acc / 9.0
            })
        })
        .collect()
}

/// Area-resamples each `[N × h × w]` image of an archive to `[px × px]`.
pub fn glyphs_from_images(images: &Tensor<f32>, px: usize) -> Result<Vec<Tensor<f32>>> {
    let s = images.shape();
    if s.len() != 3 || px == 0 {
        return Err(Error::shape("glyphs_from_images", s, &[px]));
    }
    let (n, h, w) = (s[0], s[1], s[2]);
    let data = images.data();
    Ok((0..n)
        .map(|k| {
            let img = &data[k * h * w..(k + 1) * h * w];
            Tensor::from_fn(&[px, px], |i| {
                let (r, c) = (i / px, i % px);
                let (r0, r1) = (r * h / px, ((r + 1) * h / px).max(r * h / px + 1));
                let (c0, c1) = (c * w / px, ((c + 1) * w / px).max(c * w / px + 1));
                let mut acc = 0.0;
                for y in r0..r1.min(h) {
                    for x in c0..c1.min(w) {
                        acc += img[y * w + x];
                    }
                }
                acc / ((r1 - r0) * (c1 - c0)) as f32
            })
        })
        .collect())
}

impl MovingDigits {
    /// The default protocol on a `size`-pixel canvas, with glyph size and
    /// speed scaled from their 64-pixel values.
    pub fn scaled(size: usize, frames: usize) -> Self {
        let base = MovingDigits::default();
        MovingDigits {
            size,
            frames,
            max_speed: ((base.max_speed as usize * size + 32) / 64).max(1) as i32,
            ..base
        }
    }

    /// Glyph edge length: 16 pixels on a 64-pixel canvas, scaled with it.
    pub fn glyph_px(&self) -> usize {
        (self.size * 16 / 64).max(2)
    }

    /// Renders the clip for fixed sprites and glyphs.
    pub fn render(&self, glyphs: &[&Tensor<f32>], sprites: &mut [Sprite]) -> Result<FrameSequence> {
        let size = self.size;
        let mut frames = Tensor::<f32>::zeros(&[self.frames, size, size]);
        for t in 0..self.frames {
            let frame = &mut frames.data_mut()[t * size * size..(t + 1) * size * size];
            for (glyph, sprite) in glyphs.iter().zip(sprites.iter_mut()) {
                let gs = glyph.shape();
                let (gh, gw) = (gs[0], gs[1]);
                if gh > size || gw > size {
                    return Err(Error::shape("render", gs, &[size, size]));
                }
                if t > 0 {
                    sprite.advance((size - gw) as i32, (size - gh) as i32);
                }
                let (x, y) = (sprite.x as usize, sprite.y as usize);
                for r in 0..gh {
                    for c in 0..gw {
                        let dst = &mut frame[(y + r) * size + x + c];
                        *dst = dst.max(glyph.data()[r * gw + c]);
                    }
                }
            }
        }
        Ok(FrameSequence { frames })
    }

    /// `n` clips of `digits` glyphs at random positions and velocities.
    /// Glyphs come from `glyphs` when given, otherwise the built-in set.
    pub fn generate(&self, n: usize, seed: u64, glyphs: Option<&[Tensor<f32>]>) -> Result<Vec<FrameSequence>> {
        let px = self.glyph_px();
        if self.size < px || self.frames == 0 {
            return Err(Error::Config(format!(
                "canvas {} too small for {px}-pixel glyphs or no frames",
                self.size
            )));
        }
        let builtin;
        let pool = match glyphs {
            Some(g) if !g.is_empty() => g,
            Some(_) => return Err(Error::Data("empty glyph set".into())),
            None => {
                builtin = builtin_glyphs(px);
                &builtin[..]
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut chosen = Vec::with_capacity(self.digits);
                let mut sprites = Vec::with_capacity(self.digits);
                for _ in 0..self.digits {
                    let g = &pool[rng.random_range(0..pool.len())];
                    let (gh, gw) = (g.shape()[0], g.shape()[1]);
                    if gh > self.size || gw > self.size {
                        return Err(Error::shape("generate", g.shape(), &[self.size, self.size]));
                    }
                    sprites.push(Sprite {
                        x: rng.random_range(0..=(self.size - gw) as i32),
                        y: rng.random_range(0..=(self.size - gh) as i32),
                        vx: rng.random_range(-self.max_speed..=self.max_speed),
                        vy: rng.random_range(-self.max_speed..=self.max_speed),
                    });
                    chosen.push(g);
                }
                self.render(&chosen, &mut sprites)
            })
            .collect()
    }
}

/// [`MovingDigits::generate`] with the default 15-frame 64×64 protocol.
pub fn gen_moving_frames(n: usize, seed: u64, glyphs: Option<&[Tensor<f32>]>) -> Result<Vec<FrameSequence>> {
    MovingDigits::default().generate(n, seed, glyphs)
}

pub const CONTEXT_FRAMES: usize = 7;
pub const PREDICTED_FRAMES: usize = 3;

/// Frames 1–7 as context and frames 8–10 as prediction targets.
pub fn split_train_predict(seq: &FrameSequence) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let s = seq.frames.shape();
    let need = CONTEXT_FRAMES + PREDICTED_FRAMES;
    if s[0] < need {
        return Err(Error::Domain(format!("sequence has {} frames, need at least {need}", s[0])));
    }
    let per = s[1] * s[2];
    let d = seq.frames.data();
    let ctx = Tensor::from_vec(&[CONTEXT_FRAMES, s[1], s[2]], d[..CONTEXT_FRAMES * per].to_vec());
    let tgt = Tensor::from_vec(&[PREDICTED_FRAMES, s[1], s[2]], d[CONTEXT_FRAMES * per..need * per].to_vec());
    Ok((ctx, tgt))
}

/// Stores clips as one `[N × T × H × W]` tensor named `frames` in the
/// checkpoint format.
pub fn save_frames(path: impl AsRef<Path>, seqs: &[FrameSequence], meta: Vec<(String, String)>) -> Result<()> {
    let first = seqs.first().ok_or_else(|| Error::Data("no frame sequences to save".into()))?;
    let shape = first.frames.shape().to_vec();
    if let Some(bad) = seqs.iter().find(|s| s.frames.shape() != shape) {
        return Err(Error::shape("save_frames", bad.frames.shape(), &shape));
    }
    let items: Vec<Tensor<f32>> = seqs.iter().map(|s| s.frames.clone()).collect();
    let ck = Checkpoint {
        meta,
        entries: vec![Entry {
            name: "frames".into(),
            kind: EntryKind::Buffer,
            quantizable: false,
            tensor: Tensor::stack(&items)?,
        }],
    };
    ck.save(path)
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<Vec<FrameSequence>> {
    let path = path.as_ref();
    let ck: Checkpoint<f32> = Checkpoint::load(path)?;
    let t = &ck
        .entry("frames")
        .ok_or_else(|| Error::Data(format!("{} has no 'frames' tensor", path.display())))?
        .tensor;
    if t.rank() != 4 {
        return Err(Error::Data(format!("{}: frames tensor must be [N, T, H, W], got {:?}", path.display(), t.shape())));
    }
    (0..t.shape()[0])
        .map(|i| Ok(FrameSequence { frames: t.index_leading(i)? }))
        .collect()
}
