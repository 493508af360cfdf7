use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::so3::{det, Mat3, Vec3};

pub const MAX_ATOMIC_NUMBER: u32 = 118;

/// One molecule, crystal cell or residue graph with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conformation {
    pub id: String,
    pub atomic_numbers: Vec<u32>,
    /// Cartesian positions in Å.
    pub positions: Vec<Vec3>,
    /// Lattice vectors as rows, Å.
    pub lattice: Option<Mat3>,
    pub energy: Option<f64>,
    pub forces: Option<Vec<Vec3>>,
}

impl Conformation {
    pub fn new(id: impl Into<String>, atomic_numbers: Vec<u32>, positions: Vec<Vec3>) -> Result<Self> {
        let conf = Self {
            id: id.into(),
            atomic_numbers,
            positions,
            lattice: None,
            energy: None,
            forces: None,
        };
        conf.validate()?;
        Ok(conf)
    }

    pub fn with_lattice(mut self, lattice: Mat3) -> Result<Self> {
        self.lattice = Some(lattice);
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels(mut self, energy: Option<f64>, forces: Option<Vec<Vec3>>) -> Result<Self> {
        self.energy = energy;
        self.forces = forces;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.atomic_numbers.len() != self.positions.len() {
            return Err(GeomError::Contract(format!(
                "{} atomic numbers for {} positions",
                self.atomic_numbers.len(),
                self.positions.len()
            )));
        }
        if let Some(z) = self
            .atomic_numbers
            .iter()
            .find(|z| !(1..=MAX_ATOMIC_NUMBER).contains(*z))
        {
            return Err(GeomError::Contract(format!("atomic number {z} outside 1..=118")));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeomError::Contract("non-finite position".into()));
        }
        if let Some(l) = &self.lattice {
            if l.iter().flatten().any(|v| !v.is_finite()) || det(l).abs() <= 1e-8 {
                return Err(GeomError::Contract("degenerate lattice".into()));
            }
        }
        if let Some(e) = self.energy {
            if !e.is_finite() {
                return Err(GeomError::Contract("non-finite energy".into()));
            }
        }
        if let Some(f) = &self.forces {
            if f.len() != self.positions.len() {
                return Err(GeomError::Contract(format!(
                    "{} force rows for {} atoms",
                    f.len(),
                    self.positions.len()
                )));
            }
            if f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GeomError::Contract("non-finite force".into()));
            }
        }
        Ok(())
    }

    /// Applies `x -> R x + t` to every position and `f -> R f` to forces.
    pub fn transformed(&self, rot: &Mat3, t: &Vec3) -> Self {
        let apply = |v: &Vec3| -> Vec3 {
            let mut out = *t;
            for (i, o) in out.iter_mut().enumerate() {
                *o += rot[i][0] * v[0] + rot[i][1] * v[1] + rot[i][2] * v[2];
            }
            out
        };
        let linear = |v: &Vec3| -> Vec3 {
            std::array::from_fn(|i| rot[i][0] * v[0] + rot[i][1] * v[1] + rot[i][2] * v[2])
        };
        Self {
            id: self.id.clone(),
            atomic_numbers: self.atomic_numbers.clone(),
            positions: self.positions.iter().map(apply).collect(),
            // lattice rows are vectors, so they rotate but do not translate
            lattice: self.lattice.map(|l| [linear(&l[0]), linear(&l[1]), linear(&l[2])]),
            energy: self.energy,
            forces: self.forces.as_ref().map(|f| f.iter().map(linear).collect()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    z: Vec<u32>,
    pos: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lattice: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forces: Option<Vec<Vec<f64>>>,
}

fn rows3(name: &str, rows: Vec<Vec<f64>>) -> std::result::Result<Vec<Vec3>, String> {
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            <[f64; 3]>::try_from(r.as_slice())
                .map_err(|_| format!("{name}[{i}] has {} components, expected 3", r.len()))
        })
        .collect()
}

fn from_record(rec: Record) -> std::result::Result<Conformation, String> {
    let positions = rows3("pos", rec.pos)?;
    let lattice = match rec.lattice {
        Some(rows) => {
            let rows = rows3("lattice", rows)?;
            let m: Mat3 = rows
                .try_into()
                .map_err(|r: Vec<Vec3>| format!("lattice has {} rows, expected 3", r.len()))?;
            Some(m)
        }
        None => None,
    };
    let forces = rec.forces.map(|f| rows3("forces", f)).transpose()?;
    let conf = Conformation {
        id: rec.id,
        atomic_numbers: rec.z,
        positions,
        lattice,
        energy: rec.energy,
        forces,
    };
    conf.validate().map_err(|e| e.to_string())?;
    Ok(conf)
}

fn to_record(conf: &Conformation) -> Record {
    let rows = |v: &[Vec3]| v.iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    Record {
        id: conf.id.clone(),
        z: conf.atomic_numbers.clone(),
        pos: rows(&conf.positions),
        lattice: conf.lattice.map(|l| rows(&l)),
        energy: conf.energy,
        forces: conf.forces.as_ref().map(|f| rows(f)),
    }
}

/// Parses one JSON Lines record; `line` is 1-based and only used in errors.
pub fn parse_record(text: &str, line: usize) -> Result<Conformation> {
    let rec: Record = serde_json::from_str(text).map_err(|e| GeomError::Parse {
        line,
        message: e.to_string(),
    })?;
    from_record(rec).map_err(|message| GeomError::Parse { line, message })
}

pub fn to_json_line(conf: &Conformation) -> String {
    serde_json::to_string(&to_record(conf)).expect("records serialize")
}

/// Streams conformations from JSON Lines, skipping blank lines.
pub fn read_dataset<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Conformation>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(text) if text.trim().is_empty() => None,
            Ok(text) => Some(parse_record(&text, i + 1)),
            Err(e) => Some(Err(GeomError::Parse {
                line: i + 1,
                message: e.to_string(),
            })),
        })
}

pub fn load_dataset(path: &Path) -> Result<Vec<Conformation>> {
    let file = std::fs::File::open(path).map_err(|source| GeomError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(BufReader::new(file)).collect()
}

pub fn write_dataset(path: &Path, confs: &[Conformation]) -> Result<()> {
    let io_err = |source| GeomError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for c in confs {
        writeln!(file, "{}", to_json_line(c)).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}
