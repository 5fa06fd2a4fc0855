//! Trajectory directories.
//!
//! ```text
//! trajectory.json        config, model and noise path
//! index.csv              one row per recorded instant
//! steps.csv              one row per step
//! fields/state_NNNNN.bin, fields/penalty_NNNNN.bin
//! ```
//!
//! Both CSVs start with a `# <tag>` line carrying caller provenance.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SolverConfig, StepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::ModelSpec;
use crate::sde_driver::NoisePathSpec;

#[derive(Serialize, Deserialize)]
struct Header {
    tag: String,
    config: SolverConfig,
    model: ModelSpec,
    noise: NoisePathSpec,
}

fn field_name(kind: &str, j: usize) -> String {
    format!("fields/{kind}_{j:05}.bin")
}

impl Trajectory {
    pub fn save(&self, dir: &Path, tag: &str) -> Result<()> {
        fs::create_dir_all(dir.join("fields"))?;
        let header = Header { tag: tag.to_string(), config: self.config.clone(), model: self.model.clone(), noise: self.noise };
        let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("trajectory.json"), json + "\n")?;

        let mut index = BufWriter::new(fs::File::create(dir.join("index.csv"))?);
        writeln!(index, "# {tag}")?;
        writeln!(index, "record,step,time,state_file,penalty_file,mass,min_state,penalty_mass")?;
        for j in 0..self.len() {
            let (state, penalty) = (field_name("state", j), field_name("penalty", j));
            self.states[j].save_binary(&dir.join(&state))?;
            self.penalty_fields[j].save_binary(&dir.join(&penalty))?;
            writeln!(
                index,
                "{j},{},{},{state},{penalty},{},{},{}",
                self.steps[j],
                self.times[j],
                self.states[j].mean(),
                self.states[j].min(),
                self.penalty_fields[j].mean()
            )?;
        }
        index.flush()?;

        let mut steps = BufWriter::new(fs::File::create(dir.join("steps.csv"))?);
        writeln!(steps, "# {tag}")?;
        writeln!(steps, "step,mass_defect,violation_before,violation_after,monotonicity_margin,max_phi_prime")?;
        for r in &self.records {
            writeln!(
                steps,
                "{},{},{},{},{},{}",
                r.step, r.mass_defect, r.violation_before, r.violation_after, r.monotonicity_margin, r.max_phi_prime
            )?;
        }
        steps.flush()?;
        Ok(())
    }

    /// Reads a directory written by [`Trajectory::save`]; returns the tag too.
    pub fn load(dir: &Path) -> Result<(Trajectory, String)> {
        let header: Header = serde_json::from_str(&fs::read_to_string(dir.join("trajectory.json"))?)
            .map_err(|e| Error::Format(format!("trajectory.json: {e}")))?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("index.csv: {e}")));
        let mut traj = Trajectory {
            config: header.config,
            model: header.model,
            noise: header.noise,
            times: Vec::new(),
            steps: Vec::new(),
            states: Vec::new(),
            penalty_fields: Vec::new(),
            records: Vec::new(),
        };
        let index = BufReader::new(fs::File::open(dir.join("index.csv"))?);
        for line in index.lines().skip(2) {
            let line = line?;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 5 {
                return Err(Error::Format(format!("index.csv: short row {line:?}")));
            }
            traj.steps.push(cols[1].parse().map_err(|_| Error::Format(format!("index.csv: bad step {:?}", cols[1])))?);
            traj.times.push(parse(cols[2])?);
            let state = Field::load_binary(&dir.join(cols[3]))?;
            let penalty = Field::load_binary(&dir.join(cols[4]))?;
            traj.config.grid.check_same(state.grid())?;
            traj.states.push(state);
            traj.penalty_fields.push(penalty);
        }
        let steps = BufReader::new(fs::File::open(dir.join("steps.csv"))?);
        for line in steps.lines().skip(2) {
            let line = line?;
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 6 {
                return Err(Error::Format(format!("steps.csv: bad row {line:?}")));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("steps.csv: {e}")));
            traj.records.push(StepRecord {
                step: c[0].parse().map_err(|_| Error::Format(format!("steps.csv: bad step {:?}", c[0])))?,
                mass_defect: f(c[1])?,
                violation_before: f(c[2])?,
                violation_after: f(c[3])?,
                monotonicity_margin: f(c[4])?,
                max_phi_prime: f(c[5])?,
            });
        }
        Ok((traj, header.tag))
    }
}
