use super::BnnError;
use rand::Rng;
use std::fmt::Write as _;

/// A fully connected binarized network. `weights[l][j][i]` connects input
/// `i` to node `j` of layer `l + 1`; bit 1 means +1 and bit 0 means -1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BnnModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<bool>>>,
    pub biases: Vec<Vec<i64>>,
    pub pixel_width: usize,
    /// Accumulator width in bits; all arithmetic wraps modulo `2^width`.
    pub width: usize,
}

impl BnnModel {
    pub fn new(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<Vec<bool>>>,
        biases: Vec<Vec<i64>>,
        pixel_width: usize,
        width: usize,
    ) -> Result<Self, BnnError> {
        let m = Self {
            layer_sizes,
            weights,
            biases,
            pixel_width,
            width,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), BnnError> {
        let dim = |msg: String| Err(BnnError::Dimension(msg));
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return dim(format!("bad layer sizes {:?}", self.layer_sizes));
        }
        if !(2..=32).contains(&self.width) {
            return dim(format!("width {} outside 2..=32", self.width));
        }
        if self.pixel_width == 0 || self.pixel_width >= self.width {
            return dim(format!(
                "pixel width {} must be in 1..{}",
                self.pixel_width, self.width
            ));
        }
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return dim(format!("expected {n_layers} weight and bias layers"));
        }
        let (lo, hi) = self.bias_range();
        for l in 0..n_layers {
            let (fan_in, nodes) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != nodes || self.biases[l].len() != nodes {
                return dim(format!("layer {} must have {nodes} nodes", l + 1));
            }
            if let Some(j) = self.weights[l].iter().position(|r| r.len() != fan_in) {
                return dim(format!("layer {} node {j} needs {fan_in} weights", l + 1));
            }
            if let Some(b) = self.biases[l].iter().find(|b| !(lo..=hi).contains(*b)) {
                return dim(format!("bias {b} does not fit {} bits", self.width));
            }
        }
        Ok(())
    }

    /// Representable signed range of a `width`-bit word.
    pub fn bias_range(&self) -> (i64, i64) {
        let half = 1i64 << (self.width - 1);
        (-half, half - 1)
    }

    pub fn n_in(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers (hidden layers plus the output layer).
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn mask(&self) -> u64 {
        (1u64 << self.width) - 1
    }

    pub fn check_image(&self, image: &[u32]) -> Result<(), BnnError> {
        if image.len() != self.n_in() {
            return Err(BnnError::Dimension(format!(
                "image has {} pixels, model expects {}",
                image.len(),
                self.n_in()
            )));
        }
        if let Some(p) = image.iter().find(|&&p| (p as u64) >> self.pixel_width != 0) {
            return Err(BnnError::Dimension(format!(
                "pixel {p} exceeds {} bits",
                self.pixel_width
            )));
        }
        Ok(())
    }

    /// Uniform weights and biases in `[-fan_in, fan_in]` clipped to the
    /// word range.
    pub fn random(
        layer_sizes: &[usize],
        pixel_width: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, BnnError> {
        let half = 1i64 << (width.clamp(2, 32) - 1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len().saturating_sub(1) {
            let (fan_in, nodes) = (layer_sizes[l], layer_sizes[l + 1]);
            let b = (fan_in as i64).min(half - 1);
            weights.push(
                (0..nodes)
                    .map(|_| (0..fan_in).map(|_| rng.random()).collect())
                    .collect(),
            );
            biases.push((0..nodes).map(|_| rng.random_range(-b..=b)).collect());
        }
        Self::new(layer_sizes.to_vec(), weights, biases, pixel_width, width)
    }

    pub fn random_image(&self, rng: &mut impl Rng) -> Vec<u32> {
        (0..self.n_in())
            .map(|_| rng.random_range(0..1u32 << self.pixel_width))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("bnn v1\n");
        let sizes: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        writeln!(s, "layers: {}", sizes.join(" ")).unwrap();
        writeln!(s, "pixel_width: {}", self.pixel_width).unwrap();
        writeln!(s, "width: {}", self.width).unwrap();
        for l in 0..self.n_layers() {
            s.push_str("weights:\n");
            for row in &self.weights[l] {
                s.extend(row.iter().map(|&w| if w { '1' } else { '0' }));
                s.push('\n');
            }
            let b: Vec<String> = self.biases[l].iter().map(|b| b.to_string()).collect();
            writeln!(s, "biases: {}", b.join(" ")).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, BnnError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();
        let err = |line: usize, msg: &str| BnnError::Parse {
            line,
            msg: msg.to_string(),
        };
        let eof = || BnnError::Parse {
            line: text.lines().count(),
            msg: "unexpected end of file".into(),
        };

        let (n, header) = lines.next().ok_or_else(eof)?;
        if header != "bnn v1" {
            return Err(err(n, "expected header `bnn v1`"));
        }
        let mut field = |name: &str| -> Result<(usize, String), BnnError> {
            let (n, l) = lines.next().ok_or_else(eof)?;
            match l.split_once(':') {
                Some((k, v)) if k.trim() == name => Ok((n, v.trim().to_string())),
                _ => Err(err(n, &format!("expected `{name}:`"))),
            }
        };
        let (n, sizes) = field("layers")?;
        let layer_sizes = sizes
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err(n, "layer sizes must be integers"))?;
        if layer_sizes.len() < 2 {
            return Err(err(n, "need at least an input and an output layer"));
        }
        let (pixel_width, width) = {
            let mut number = |name: &str| -> Result<usize, BnnError> {
                let (n, v) = field(name)?;
                v.parse()
                    .map_err(|_| err(n, &format!("`{name}` must be an integer")))
            };
            (number("pixel_width")?, number("width")?)
        };

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, nodes) = (layer_sizes[l], layer_sizes[l + 1]);
            let (n, l0) = lines.next().ok_or_else(eof)?;
            if l0 != "weights:" {
                return Err(err(n, "expected `weights:`"));
            }
            let mut rows = Vec::with_capacity(nodes);
            for _ in 0..nodes {
                let (n, row) = lines.next().ok_or_else(eof)?;
                if row.len() != fan_in {
                    return Err(err(n, &format!("weight row needs {fan_in} bits")));
                }
                let bits = row
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(err(n, "weights must be 0 or 1")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                rows.push(bits);
            }
            weights.push(rows);
            let (n, l1) = lines.next().ok_or_else(eof)?;
            let rest = l1
                .strip_prefix("biases:")
                .ok_or_else(|| err(n, "expected `biases:`"))?;
            let mut b = Vec::with_capacity(nodes);
            parse_biases(n, rest, &mut b)?;
            while b.len() < nodes {
                let (n, more) = lines.next().ok_or_else(eof)?;
                parse_biases(n, more, &mut b)?;
            }
            if b.len() != nodes {
                return Err(err(n, &format!("expected {nodes} biases")));
            }
            biases.push(b);
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing content"));
        }
        Self::new(layer_sizes, weights, biases, pixel_width, width)
    }
}

fn parse_biases(line: usize, s: &str, out: &mut Vec<i64>) -> Result<(), BnnError> {
    for t in s.split_whitespace() {
        out.push(t.parse().map_err(|_| BnnError::Parse {
            line,
            msg: "bias must be an integer".into(),
        })?);
    }
    Ok(())
}

/// Sign-extends the low `width` bits of `v`.
pub fn to_signed(v: u64, width: usize) -> i64 {
    let shift = 64 - width;
    ((v << shift) as i64) >> shift
}
