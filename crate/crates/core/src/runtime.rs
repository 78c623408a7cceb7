//! Online evaluation of the explicit law and its flattened table form.
//!
//! Point location is a sequential search: regions are tested in stored
//! order and the first one whose half-spaces all hold (within
//! [`SEARCH_TOL`]) supplies the affine law. Evaluation works on borrowed
//! slices and does not allocate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::explicit::PwaLaw;

/// Containment tolerance on normalized rows.
pub const SEARCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchError {
    /// No region contains the point; carries the region with the smallest
    /// worst-row violation and that violation.
    NoRegionFound { nearest: usize, violation: f64 },
    Dimension { expected: usize, found: usize },
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::NoRegionFound { nearest, violation } => write!(
                f,
                "no region contains the parameter (nearest region {nearest}, violation {violation:.3e})"
            ),
            SearchError::Dimension { expected, found } => {
                write!(f, "parameter length {found}, law expects {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SearchError {}

/// Anything that maps a parameter vector to an input by point location.
pub trait ControlLaw {
    fn dim(&self) -> usize;
    fn inputs(&self) -> usize;
    fn regions(&self) -> usize;

    /// Writes the input into `u` and returns the 0-based region index.
    /// `dot_products` is incremented by the number of half-space tests made.
    fn evaluate_counted(&self, x: &[f64], u: &mut [f64], dot_products: &mut usize) -> Result<usize, SearchError>;

    fn evaluate(&self, x: &[f64], u: &mut [f64]) -> Result<usize, SearchError> {
        let mut count = 0;
        self.evaluate_counted(x, u, &mut count)
    }
}

#[inline]
fn dot(row: impl Iterator<Item = f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, v) in row.zip(x) {
        acc += a * v;
    }
    acc
}

fn check_len(expected: usize, x: &[f64], u: &[f64], inputs: usize) -> Result<(), SearchError> {
    if x.len() != expected {
        return Err(SearchError::Dimension {
            expected,
            found: x.len(),
        });
    }
    if u.len() != inputs {
        return Err(SearchError::Dimension {
            expected: inputs,
            found: u.len(),
        });
    }
    Ok(())
}

impl ControlLaw for PwaLaw {
    fn dim(&self) -> usize {
        self.dim
    }

    fn inputs(&self) -> usize {
        self.inputs
    }

    fn regions(&self) -> usize {
        self.regions.len()
    }

    fn evaluate_counted(&self, x: &[f64], u: &mut [f64], dot_products: &mut usize) -> Result<usize, SearchError> {
        check_len(self.dim, x, u, self.inputs)?;
        for (index, region) in self.regions.iter().enumerate() {
            let poly = &region.region;
            let mut inside = true;
            for i in 0..poly.rows() {
                *dot_products += 1;
                if dot(poly.a.row(i).iter().copied(), x) > poly.b[i] + SEARCH_TOL {
                    inside = false;
                    break;
                }
            }
            if inside {
                for (k, out) in u.iter_mut().enumerate() {
                    *out = dot(region.gain.row(k).iter().copied(), x) + region.offset[k];
                }
                return Ok(index);
            }
        }
        let (nearest, violation) = self
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let worst = (0..r.region.rows())
                    .map(|k| dot(r.region.a.row(k).iter().copied(), x) - r.region.b[k])
                    .fold(f64::NEG_INFINITY, f64::max);
                (i, worst)
            })
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        Err(SearchError::NoRegionFound { nearest, violation })
    }
}

/// Sequential search over a law, returning the first input and region.
pub fn sequential_search<L: ControlLaw + ?Sized>(law: &L, x: &[f64]) -> Result<(f64, usize), SearchError> {
    let mut u = [0.0f64; 1];
    if law.inputs() != 1 {
        return Err(SearchError::Dimension {
            expected: 1,
            found: law.inputs(),
        });
    }
    let region = law.evaluate(x, &mut u)?;
    Ok((u[0], region))
}

/// Scalar storage width of exported tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarWidth {
    /// IEEE single precision, as on targets where `double` is 32 bits.
    Four,
    Eight,
}

impl ScalarWidth {
    pub fn bytes(self) -> usize {
        match self {
            ScalarWidth::Four => 4,
            ScalarWidth::Eight => 8,
        }
    }

    pub fn from_bytes(n: u32) -> Option<Self> {
        match n {
            4 => Some(ScalarWidth::Four),
            8 => Some(ScalarWidth::Eight),
            _ => None,
        }
    }

    fn store(self, v: f64) -> f64 {
        match self {
            ScalarWidth::Four => v as f32 as f64,
            ScalarWidth::Eight => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableError {
    EmptyLaw,
    BadMagic,
    UnsupportedVersion(u32),
    BadScalarWidth(u32),
    Truncated { expected: usize, found: usize },
    TrailingBytes { expected: usize, found: usize },
    Inconsistent(&'static str),
}

impl fmt::Display for TableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableError::EmptyLaw => f.write_str("law has no regions"),
            TableError::BadMagic => f.write_str("not a law table (bad magic)"),
            TableError::UnsupportedVersion(v) => write!(f, "unsupported table version {v}"),
            TableError::BadScalarWidth(w) => write!(f, "unsupported scalar width {w}"),
            TableError::Truncated { expected, found } => {
                write!(f, "table truncated: expected {expected} bytes, found {found}")
            }
            TableError::TrailingBytes { expected, found } => {
                write!(f, "table has trailing data: expected {expected} bytes, found {found}")
            }
            TableError::Inconsistent(what) => write!(f, "inconsistent table: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TableError {}

pub const TABLE_MAGIC: &[u8; 4] = b"EMPC";
pub const TABLE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Flattened law: region rows and gains in contiguous row-major arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct LawTables {
    pub dim: usize,
    pub inputs: usize,
    pub width: ScalarWidth,
    /// Half-space count per region.
    pub halfspaces: Vec<u32>,
    /// Σh × dim region normals.
    pub z: Vec<f64>,
    /// Σh region offsets.
    pub z_rhs: Vec<f64>,
    /// M × l × dim gains.
    pub f: Vec<f64>,
    /// M × l offsets.
    pub g: Vec<f64>,
}

impl LawTables {
    pub fn from_law(law: &PwaLaw, width: ScalarWidth) -> Result<Self, TableError> {
        if law.regions.is_empty() {
            return Err(TableError::EmptyLaw);
        }
        let (dim, l) = (law.dim, law.inputs);
        let mut tables = LawTables {
            dim,
            inputs: l,
            width,
            halfspaces: Vec::with_capacity(law.len()),
            z: Vec::new(),
            z_rhs: Vec::new(),
            f: Vec::with_capacity(law.len() * l * dim),
            g: Vec::with_capacity(law.len() * l),
        };
        for region in &law.regions {
            let poly = &region.region;
            tables.halfspaces.push(poly.rows() as u32);
            for i in 0..poly.rows() {
                tables.z.extend(poly.a.row(i).iter().map(|v| width.store(*v)));
                tables.z_rhs.push(width.store(poly.b[i]));
            }
            for k in 0..l {
                tables.f.extend(region.gain.row(k).iter().map(|v| width.store(*v)));
                tables.g.push(width.store(region.offset[k]));
            }
        }
        Ok(tables)
    }

    pub fn total_halfspaces(&self) -> usize {
        self.halfspaces.iter().map(|h| *h as usize).sum()
    }

    fn body_len(&self) -> usize {
        let w = self.width.bytes();
        let sh = self.total_halfspaces();
        let m = self.halfspaces.len();
        4 * m + w * (sh * self.dim + sh + m * self.inputs * self.dim + m * self.inputs)
    }

    /// Little-endian binary layout:
    /// `"EMPC" | version | M | dim | l | width` (u32 each after the magic),
    /// then `h_i` (u32 × M), then Z, z, F, g as scalars of `width` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.body_len());
        out.extend_from_slice(TABLE_MAGIC);
        for v in [
            TABLE_VERSION,
            self.halfspaces.len() as u32,
            self.dim as u32,
            self.inputs as u32,
            self.width.bytes() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.halfspaces {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for v in self.z.iter().chain(&self.z_rhs).chain(&self.f).chain(&self.g) {
            match self.width {
                ScalarWidth::Four => out.extend_from_slice(&(*v as f32).to_le_bytes()),
                ScalarWidth::Eight => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != TABLE_MAGIC {
                return Err(TableError::BadMagic);
            }
            return Err(TableError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != TABLE_MAGIC {
            return Err(TableError::BadMagic);
        }
        let word = |i: usize| u32::from_le_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]]);
        let version = word(1);
        if version != TABLE_VERSION {
            return Err(TableError::UnsupportedVersion(version));
        }
        let m = word(2) as usize;
        let dim = word(3) as usize;
        let inputs = word(4) as usize;
        let width = ScalarWidth::from_bytes(word(5)).ok_or(TableError::BadScalarWidth(word(5)))?;
        if m == 0 {
            return Err(TableError::EmptyLaw);
        }
        if dim == 0 || inputs == 0 {
            return Err(TableError::Inconsistent("zero dimension"));
        }
        let counts_end = HEADER_LEN
            .checked_add(m.checked_mul(4).ok_or(TableError::Inconsistent("region count"))?)
            .ok_or(TableError::Inconsistent("region count"))?;
        if bytes.len() < counts_end {
            return Err(TableError::Truncated {
                expected: counts_end,
                found: bytes.len(),
            });
        }
        let halfspaces: Vec<u32> = (0..m)
            .map(|i| {
                let o = HEADER_LEN + 4 * i;
                u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]])
            })
            .collect();
        let mut tables = LawTables {
            dim,
            inputs,
            width,
            halfspaces,
            z: Vec::new(),
            z_rhs: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
        };
        let expected = HEADER_LEN + tables.body_len();
        if bytes.len() < expected {
            return Err(TableError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(TableError::TrailingBytes {
                expected,
                found: bytes.len(),
            });
        }
        let w = width.bytes();
        let mut cursor = counts_end;
        let mut read = |count: usize| -> Vec<f64> {
            let vals = (0..count)
                .map(|k| {
                    let o = cursor + k * w;
                    match width {
                        ScalarWidth::Four => {
                            f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64
                        }
                        ScalarWidth::Eight => {
                            let mut buf = [0u8; 8];
                            buf.copy_from_slice(&bytes[o..o + 8]);
                            f64::from_le_bytes(buf)
                        }
                    }
                })
                .collect();
            cursor += count * w;
            vals
        };
        let sh = tables.total_halfspaces();
        tables.z = read(sh * dim);
        tables.z_rhs = read(sh);
        tables.f = read(m * inputs * dim);
        tables.g = read(m * inputs);
        Ok(tables)
    }

    /// C-style static array rendering of the same data.
    pub fn to_static_source(&self, prefix: &str) -> String {
        let ty = match self.width {
            ScalarWidth::Four => "float",
            ScalarWidth::Eight => "double",
        };
        let upper = prefix.to_ascii_uppercase();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "/* explicit control law: {} regions, {} parameters, {} inputs, {}-byte scalars */",
            self.halfspaces.len(),
            self.dim,
            self.inputs,
            self.width.bytes()
        );
        let _ = writeln!(out, "#define {upper}_REGIONS {}", self.halfspaces.len());
        let _ = writeln!(out, "#define {upper}_DIM {}", self.dim);
        let _ = writeln!(out, "#define {upper}_INPUTS {}", self.inputs);
        let _ = writeln!(out, "#define {upper}_HALFSPACES {}", self.total_halfspaces());
        let _ = writeln!(out);
        let counts: Vec<String> = self.halfspaces.iter().map(|h| format!("{h}")).collect();
        render_array(&mut out, "static const unsigned short", &format!("{prefix}_h"), &counts);
        for (name, values) in [("Z", &self.z), ("z", &self.z_rhs), ("F", &self.f), ("g", &self.g)] {
            let rendered: Vec<String> = values
                .iter()
                .map(|v| match self.width {
                    ScalarWidth::Four => format!("{:e}f", *v as f32),
                    ScalarWidth::Eight => format!("{:e}", v),
                })
                .collect();
            render_array(&mut out, &format!("static const {ty}"), &format!("{prefix}_{name}"), &rendered);
        }
        out
    }
}

fn render_array(out: &mut String, decl: &str, name: &str, values: &[String]) {
    let _ = writeln!(out, "{decl} {name}[{}] = {{", values.len());
    for chunk in values.chunks(6) {
        let _ = writeln!(out, "    {},", chunk.join(", "));
    }
    let _ = writeln!(out, "}};");
    let _ = writeln!(out);
}

impl ControlLaw for LawTables {
    fn dim(&self) -> usize {
        self.dim
    }

    fn inputs(&self) -> usize {
        self.inputs
    }

    fn regions(&self) -> usize {
        self.halfspaces.len()
    }

    fn evaluate_counted(&self, x: &[f64], u: &mut [f64], dot_products: &mut usize) -> Result<usize, SearchError> {
        check_len(self.dim, x, u, self.inputs)?;
        let d = self.dim;
        let mut row = 0;
        for (index, &h) in self.halfspaces.iter().enumerate() {
            let h = h as usize;
            let mut inside = true;
            for i in row..row + h {
                *dot_products += 1;
                if dot(self.z[i * d..(i + 1) * d].iter().copied(), x) > self.z_rhs[i] + SEARCH_TOL {
                    inside = false;
                    break;
                }
            }
            if inside {
                for (k, out) in u.iter_mut().enumerate() {
                    let base = (index * self.inputs + k) * d;
                    *out = dot(self.f[base..base + d].iter().copied(), x) + self.g[index * self.inputs + k];
                }
                return Ok(index);
            }
            row += h;
        }
        let mut nearest = (0, f64::INFINITY);
        let mut row = 0;
        for (index, &h) in self.halfspaces.iter().enumerate() {
            let h = h as usize;
            let worst = (row..row + h)
                .map(|i| dot(self.z[i * d..(i + 1) * d].iter().copied(), x) - self.z_rhs[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if worst < nearest.1 {
                nearest = (index, worst);
            }
            row += h;
        }
        Err(SearchError::NoRegionFound {
            nearest: nearest.0,
            violation: nearest.1,
        })
    }
}

/// Bytes per region/half-space counter in the footprint estimate.
pub const COUNTER_BYTES: usize = 2;

/// Rough flash cost of the search routine and serial framing code, kept
/// separate from table data.
pub const CODE_ALLOWANCE_BYTES: usize = 4096;

/// Storage needed for the law tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub scalar_width: usize,
    pub regions: usize,
    pub halfspaces: usize,
    /// Σh·dim scalars.
    pub region_normals: usize,
    /// Σh scalars.
    pub region_offsets: usize,
    /// M·l·dim scalars.
    pub gains: usize,
    /// M·l scalars.
    pub gain_offsets: usize,
    /// (M + Σh) counters.
    pub index: usize,
}

impl Footprint {
    pub fn table_bytes(&self) -> usize {
        self.region_normals + self.region_offsets + self.gains + self.gain_offsets + self.index
    }

    pub fn with_code_allowance(&self) -> usize {
        self.table_bytes() + CODE_ALLOWANCE_BYTES
    }
}

/// `width · Σ_i [h_i (dim + 1) + l (dim + 1)]` plus counter overhead.
pub fn memory_footprint(law: &PwaLaw, width: ScalarWidth) -> Footprint {
    let h: Vec<usize> = law.regions.iter().map(|r| r.halfspaces()).collect();
    footprint_from_counts(&h, law.dim, law.inputs, width)
}

pub fn footprint_from_counts(halfspaces: &[usize], dim: usize, inputs: usize, width: ScalarWidth) -> Footprint {
    let w = width.bytes();
    let m = halfspaces.len();
    let sh: usize = halfspaces.iter().sum();
    Footprint {
        scalar_width: w,
        regions: m,
        halfspaces: sh,
        region_normals: w * sh * dim,
        region_offsets: w * sh,
        gains: w * m * inputs * dim,
        gain_offsets: w * m * inputs,
        index: COUNTER_BYTES * (m + sh),
    }
}

impl LawTables {
    pub fn footprint(&self) -> Footprint {
        let h: Vec<usize> = self.halfspaces.iter().map(|h| *h as usize).collect();
        footprint_from_counts(&h, self.dim, self.inputs, self.width)
    }
}
