use crate::constraint::{Assignment, Violation};
use crate::testcase::TestCase;

use super::{
    build_model, declared_output_shape, derive_aux, output_shape, ModelConfig, OpError, OpKind,
    ShapeError,
};

/// Checks a test case against the model of its operator kind.
///
/// An empty list means the test case is valid.
pub fn validate(tc: &TestCase) -> Result<Vec<Violation>, OpError> {
    validate_assignment(tc.kind()?, &tc.to_assignment())
}

/// Checks a concrete parameter assignment against the operator's model.
///
/// Auxiliary variables are recomputed from the inputs first, so callers
/// only supply the public parameters. When every constraint holds, the
/// declared output shape is also compared against the closed-form oracle.
pub fn validate_assignment(kind: OpKind, params: &Assignment) -> Result<Vec<Violation>, OpError> {
    let model = build_model(kind, &ModelConfig::permissive())?;
    let mut full = params.clone();
    derive_aux(kind, &mut full);

    let mut out: Vec<Violation> = full
        .iter()
        .filter(|(name, _)| model.var(name).is_none())
        .map(|(name, _)| Violation {
            rule: format!("unknown parameter {name}"),
            detail: format!("{kind} has no parameter `{name}`"),
        })
        .collect();
    out.extend(model.check(&full));
    if !out.is_empty() {
        return Ok(out);
    }

    match (
        output_shape(kind, params),
        declared_output_shape(kind, params),
    ) {
        (Ok(want), Ok(got)) if want == got => {}
        (Ok(want), Ok(got)) => out.push(Violation {
            rule: "output shape".into(),
            detail: format!("declared {:?}, reference {:?}", got.shape, want.shape),
        }),
        (Err(ShapeError::Invalid { rule }), _) => out.push(Violation {
            rule: format!("reference: {rule}"),
            detail: "model accepts parameters the reference rejects".into(),
        }),
        (Err(e), _) | (_, Err(e)) => out.push(Violation {
            rule: "output shape".into(),
            detail: e.to_string(),
        }),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::solve;
    use crate::ops::{public_params, OperatorFamily, Rank};

    fn conv2d_reference() -> Assignment {
        [
            ("batch", 1),
            ("inch", 3),
            ("outch", 16),
            ("groups", 1),
            ("dims.0", 128),
            ("dims.1", 128),
            ("ksize.0", 5),
            ("ksize.1", 5),
            ("stride.0", 1),
            ("stride.1", 1),
            ("pad.0", 1),
            ("pad.1", 1),
            ("dil.0", 1),
            ("dil.1", 1),
            ("outdims.0", 126),
            ("outdims.1", 126),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    #[test]
    fn reference_case_is_valid() {
        let k = OpKind::spatial(OperatorFamily::Conv, Rank::R2).unwrap();
        assert!(validate_assignment(k, &conv2d_reference())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn edited_output_breaks_core_relation_only() {
        let k = OpKind::spatial(OperatorFamily::Conv, Rank::R2).unwrap();
        let mut a = conv2d_reference();
        a.insert("outdims.0", 127);
        let v = validate_assignment(k, &a).unwrap();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, "core[0]");
    }

    #[test]
    fn unknown_and_missing_params() {
        let k = OpKind::spatial(OperatorFamily::Conv, Rank::R2).unwrap();
        let mut a = conv2d_reference();
        a.insert("bogus", 1);
        let v = validate_assignment(k, &a).unwrap();
        assert!(v.iter().any(|v| v.rule == "unknown parameter bogus"));

        let a: Assignment = conv2d_reference()
            .iter()
            .filter(|(n, _)| *n != "groups")
            .map(|(n, v)| (n.to_string(), v))
            .collect();
        let v = validate_assignment(k, &a).unwrap();
        assert!(v.iter().any(|v| v.rule == "domain of groups"));
    }

    #[test]
    fn solver_output_validates() {
        for k in OpKind::all() {
            let m = build_model(k, &ModelConfig::default()).unwrap();
            for seed in 0..5 {
                let a = solve(&m, seed, 100_000).unwrap().into_assignment().unwrap();
                let v = validate_assignment(k, &public_params(&m, &a)).unwrap();
                assert!(v.is_empty(), "{k} seed {seed}: {v:?}");
            }
        }
    }
}
