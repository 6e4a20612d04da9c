use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::engine::EngineState;
use super::spec::NeuronId;
use crate::error::{Error, Result};

/// Time-ordered record of every spike in a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub events: Vec<(u64, NeuronId)>,
    pub step_count: u64,
    pub neuron_count: usize,
}

impl SpikeRaster {
    pub fn new(neuron_count: usize) -> Self {
        Self {
            events: Vec::new(),
            step_count: 0,
            neuron_count,
        }
    }

    /// Appends the spikes of the next step. `spikes` must be ascending.
    pub fn push_step(&mut self, spikes: &[NeuronId]) {
        let step = self.step_count;
        self.events.extend(spikes.iter().map(|&id| (step, id)));
        self.step_count += 1;
    }

    /// Events with `start <= step < end`.
    pub fn window(&self, start: u64, end: u64) -> &[(u64, NeuronId)] {
        let lo = self.events.partition_point(|&(s, _)| s < start);
        let hi = self.events.partition_point(|&(s, _)| s < end);
        &self.events[lo..hi]
    }

    /// Spike counts per neuron in `ids` over `[start, end)`.
    pub fn counts(&self, ids: std::ops::Range<NeuronId>, start: u64, end: u64) -> Vec<u32> {
        let mut counts = vec![0u32; ids.len()];
        for &(_, id) in self.window(start, end) {
            if ids.contains(&id) {
                counts[id - ids.start] += 1;
            }
        }
        counts
    }

    pub fn is_well_formed(&self) -> bool {
        self.events.windows(2).all(|w| w[0] < w[1])
            && self
                .events
                .iter()
                .all(|&(s, id)| s < self.step_count && id < self.neuron_count)
    }

    /// CSV with header `step,neuron_id,population_tag`.
    pub fn write_csv<W: Write>(&self, out: W, tags: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["step", "neuron_id", "population_tag"]).map_err(wrap)?;
        for &(step, id) in &self.events {
            let tag = tags.get(id).map(String::as_str).unwrap_or("");
            w.write_record([step.to_string(), id.to_string(), tag.to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// Reads a raster written by [`write_csv`](Self::write_csv). The CSV does
    /// not carry trailing silent steps or neurons, so both are supplied.
    pub fn read_csv<R: Read>(input: R, step_count: u64, neuron_count: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut raster = SpikeRaster::new(neuron_count);
        raster.step_count = step_count;
        for record in r.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let parse = |i: usize| -> Result<u64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Parse("short raster row".into()))?
                    .parse()
                    .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))
            };
            raster.events.push((parse(0)?, parse(1)? as usize));
        }
        if !raster.is_well_formed() {
            return Err(Error::Parse("raster events out of order or out of range".into()));
        }
        Ok(raster)
    }
}

/// Runs `steps` engine steps, feeding inputs from `schedule(step)` and
/// collecting every spike. The engine is left in its final state.
pub fn record<F>(engine: &mut EngineState, steps: u64, mut schedule: F) -> SpikeRaster
where
    F: FnMut(u64) -> Vec<(NeuronId, f64)>,
{
    let mut raster = SpikeRaster::new(engine.neuron_count());
    for t in 0..steps {
        let inputs = schedule(t);
        let spikes = engine.step(&inputs);
        raster.push_step(&spikes);
    }
    raster
}
