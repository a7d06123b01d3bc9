use crate::error::{blocking, decode, AppError};
use axum::body::Bytes;
use axum::Json;
use molgrow_api::{
    Bond, EnumerateRequest, EnumerateResponse, ErrorKind, Health, ParseRequest, ParseResponse,
    RoundtripLine, RoundtripRequest, RoundtripResponse, ScoreRequest, ScoreResponse, ScoredSmiles,
};
use molgrow_core::enumerate::{enumerate_molecules, EnumerateError};
use molgrow_core::objectives::build_objective;
use molgrow_core::smiles::{corpus_lines, parse as parse_smiles, write};
use molgrow_core::{canonical_key, Constraints};

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

const ENUMERATION_STATE_CAP: usize = 2_000_000;

pub async fn enumerate(body: Bytes) -> Result<Json<EnumerateResponse>, AppError> {
    let req: EnumerateRequest = decode(&body)?;
    blocking(move || {
        let alphabet = req.alphabet.resolve().map_err(AppError::config)?;
        let constraints = req
            .constraints
            .unwrap_or_else(|| Constraints::with_max_atoms(req.max_atoms));
        let mols = enumerate_molecules(&alphabet, &constraints, req.max_atoms, ENUMERATION_STATE_CAP)
            .map_err(|e| match e {
                EnumerateError::BudgetExceeded(_) => AppError::new(ErrorKind::BadRequest, e.to_string()),
                _ => AppError::config(e),
            })?;
        let mut smiles: Vec<String> = mols.values().map(|m| write(m, &alphabet)).collect();
        smiles.sort();
        Ok(Json(EnumerateResponse {
            count: smiles.len(),
            smiles,
        }))
    })
    .await
}

pub async fn score(body: Bytes) -> Result<Json<ScoreResponse>, AppError> {
    let req: ScoreRequest = decode(&body)?;
    blocking(move || {
        let alphabet = req.alphabet.resolve().map_err(AppError::config)?;
        let objective = build_objective(&req.objective, &alphabet)?;
        let parsed: Vec<_> = req.smiles.iter().map(|s| parse_smiles(s, &alphabet)).collect();
        let valid: Vec<_> = parsed.iter().filter_map(|p| p.as_ref().ok().cloned()).collect();
        let mut values = objective.evaluate(&valid)?.into_iter();
        let scores = req
            .smiles
            .iter()
            .zip(&parsed)
            .map(|(s, p)| match p {
                Ok(_) => {
                    let v = values.next().expect("one value per molecule");
                    ScoredSmiles {
                        smiles: s.clone(),
                        value: v.is_finite().then_some(v),
                        error: None,
                    }
                }
                Err(e) => ScoredSmiles {
                    smiles: s.clone(),
                    value: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        Ok(Json(ScoreResponse { scores }))
    })
    .await
}

pub async fn roundtrip(body: Bytes) -> Result<Json<RoundtripResponse>, AppError> {
    let req: RoundtripRequest = decode(&body)?;
    blocking(move || {
        let alphabet = req.alphabet.resolve().map_err(AppError::config)?;
        let lines: Vec<RoundtripLine> = corpus_lines(&req.corpus)
            .map(|(line, s)| {
                let input = s.split_whitespace().next().unwrap_or(s).to_string();
                let result = parse_smiles(&input, &alphabet).and_then(|m| {
                    let w = write(&m, &alphabet);
                    let back = parse_smiles(&w, &alphabet)?;
                    Ok((w, canonical_key(&m) == canonical_key(&back)))
                });
                match result {
                    Ok((w, same)) => RoundtripLine {
                        line,
                        input,
                        written: Some(w),
                        ok: same,
                        error: (!same).then(|| "reparsed molecule differs".into()),
                    },
                    Err(e) => RoundtripLine {
                        line,
                        input,
                        written: None,
                        ok: false,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        Ok(Json(RoundtripResponse {
            passed: lines.iter().filter(|l| l.ok).count(),
            total: lines.len(),
            lines,
        }))
    })
    .await
}

pub async fn parse(body: Bytes) -> Result<Json<ParseResponse>, AppError> {
    let req: ParseRequest = decode(&body)?;
    let alphabet = req.alphabet.resolve().map_err(AppError::config)?;
    let m = parse_smiles(&req.smiles, &alphabet)
        .map_err(|e| AppError::new(ErrorKind::BadRequest, e.to_string()))?;
    let counts = m.formula(&alphabet);
    // Hill order: C, H, then alphabetical
    let mut formula = String::new();
    let mut push = |el: &str, n: u32| {
        formula.push_str(el);
        if n > 1 {
            formula.push_str(&n.to_string());
        }
    };
    for el in ["C", "H"] {
        if let Some(&n) = counts.get(el) {
            push(el, n);
        }
    }
    for (el, &n) in &counts {
        if *el != "C" && *el != "H" {
            push(el, n);
        }
    }
    Ok(Json(ParseResponse {
        atoms: m.atoms().iter().map(|&t| alphabet.spec(t).symbol.clone()).collect(),
        bonds: m
            .bond_list()
            .into_iter()
            .map(|(a, b, order)| Bond { a, b, order })
            .collect(),
        canonical_smiles: write(&m, &alphabet),
        formula,
    }))
}
