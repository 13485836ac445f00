//! Schema padding for latency measurements.

use actuate_core::{AttributeDescriptor, ContextSchema, ContextValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::Trace;
use crate::{Error, Result};

/// Appends uniform random numeric attributes in `[0, 1]` until the schema
/// has `total` attributes. `total` equal to the current size is a no-op.
pub fn pad_trace(trace: &Trace, total: usize, seed: u64) -> Result<Trace> {
    let base = trace.header.schema.len();
    if total < base {
        return Err(Error::Config(format!("cannot pad a {base}-attribute schema down to {total}")));
    }
    let mut attributes = trace.header.schema.attributes().to_vec();
    attributes.extend((base..total).map(|i| AttributeDescriptor::numeric(format!("pad_{i}"), 0.0, 1.0)));
    let mut out = trace.clone();
    out.header.schema = ContextSchema::new(attributes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in &mut out.records {
        r.context.extend((base..total).map(|_| ContextValue::Scalar(rng.random::<f64>())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig};

    #[test]
    fn pads_to_count() {
        let t = generate(&ScenarioConfig { days: 2, ..Default::default() }, 0).unwrap();
        let p = pad_trace(&t, 33, 1).unwrap();
        assert_eq!(p.header.schema.len(), 33);
        for r in &p.records {
            p.header.schema.snapshot(r.context.clone(), 0).unwrap();
        }
        assert_eq!(pad_trace(&t, 4, 1).unwrap(), t);
        assert!(pad_trace(&t, 3, 1).is_err());
        assert_eq!(pad_trace(&t, 33, 1).unwrap(), p);
    }
}
