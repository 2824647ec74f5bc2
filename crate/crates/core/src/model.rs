//! Declarative factorization models: an index space, a set of factors with
//! Gamma priors, and a set of observations, each defined as the product of
//! some factors collapsed over the indices it does not expose. The 0/1
//! coupling matrix R is derived from membership (R[nu][alpha] = 1 iff
//! factor alpha is listed in observation nu), never user-supplied.
//!
//! Model file format (line oriented, `#` starts a comment):
//!
//! ```text
//! index   i 146
//! index   r 5
//! factor  A i,r A=0.5 B=10
//! observe X1 i,j,k = A,B,C
//! ```

use crate::space::IndexSpace;
use crate::{Error, Result};

/// Default Gamma prior shape (favors sparse factors).
pub const DEFAULT_PRIOR_SHAPE: f64 = 0.5;
/// Default Gamma prior mean.
pub const DEFAULT_PRIOR_MEAN: f64 = 10.0;

/// A prior hyperparameter: one scalar broadcast over the factor, or one
/// value per factor cell.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorField {
    Scalar(f64),
    PerCell(Vec<f64>),
}

impl PriorField {
    fn at(&self, cell: usize) -> f64 {
        match self {
            PriorField::Scalar(v) => *v,
            PriorField::PerCell(v) => v[cell],
        }
    }

    fn validate(&self, cells: usize, factor: &str, what: &str) -> Result<()> {
        let ok = |v: f64| v > 0.0 && !v.is_nan();
        match self {
            PriorField::Scalar(v) if ok(*v) => Ok(()),
            PriorField::Scalar(v) => Err(Error::InvalidPrior {
                factor: factor.to_string(),
                reason: format!("{what} = {v} must be positive"),
            }),
            PriorField::PerCell(vs) if vs.len() != cells => Err(Error::InvalidPrior {
                factor: factor.to_string(),
                reason: format!("{what} has {} entries for {cells} cells", vs.len()),
            }),
            PriorField::PerCell(vs) => match vs.iter().all(|v| ok(*v)) {
                true => Ok(()),
                false => Err(Error::InvalidPrior {
                    factor: factor.to_string(),
                    reason: format!("{what} has a nonpositive entry"),
                }),
            },
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            PriorField::Scalar(v) => v.is_finite(),
            PriorField::PerCell(vs) => vs.iter().all(|v| v.is_finite()),
        }
    }
}

/// Gamma prior on one factor: shape A and mean B, so the density is
/// Gamma(shape A, scale B/A) with mean B and standard deviation B/sqrt(A).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub a: PriorField,
    pub b: PriorField,
}

impl PriorSpec {
    pub fn new(a: PriorField, b: PriorField) -> Self {
        Self { a, b }
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        Self {
            a: PriorField::Scalar(a),
            b: PriorField::Scalar(b),
        }
    }

    /// Shape A at a factor cell.
    pub fn shape_at(&self, cell: usize) -> f64 {
        self.a.at(cell)
    }

    /// Mean B at a factor cell.
    pub fn mean_at(&self, cell: usize) -> f64 {
        self.b.at(cell)
    }

    /// Rate A/B at a factor cell (the quantity entering every update).
    pub fn rate_at(&self, cell: usize) -> f64 {
        self.a.at(cell) / self.b.at(cell)
    }

    pub fn validate(&self, cells: usize, factor: &str) -> Result<()> {
        self.a.validate(cells, factor, "A")?;
        self.b.validate(cells, factor, "B")
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::scalar(DEFAULT_PRIOR_SHAPE, DEFAULT_PRIOR_MEAN)
    }
}

/// One factor declaration: name, ordered index subset, prior.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecl {
    pub name: String,
    pub indices: Vec<String>,
    pub prior: PriorSpec,
}

/// One observation declaration: name, visible index subset, and the names
/// of the factors whose product reconstructs it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDecl {
    pub name: String,
    pub indices: Vec<String>,
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    space: IndexSpace,
    factors: Vec<FactorDecl>,
    observations: Vec<ObservationDecl>,
    /// coupling[nu][alpha], derived at construction.
    coupling: Vec<Vec<bool>>,
    /// Per observation: connected factor positions, declaration order.
    connected: Vec<Vec<usize>>,
    /// Per observation: indices summed over, in space order.
    latent: Vec<Vec<String>>,
}

impl ModelSpec {
    pub fn new(
        space: IndexSpace,
        factors: Vec<FactorDecl>,
        observations: Vec<ObservationDecl>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidSpec("a model needs at least one observation".into()));
        }
        if factors.is_empty() {
            return Err(Error::InvalidSpec("a model needs at least one factor".into()));
        }
        for (pos, f) in factors.iter().enumerate() {
            if factors[..pos].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidSpec(format!("duplicate factor '{}'", f.name)));
            }
            let mut seen = Vec::new();
            for idx in &f.indices {
                space.cardinality(idx)?;
                if seen.contains(&idx) {
                    return Err(Error::InvalidSpec(format!(
                        "factor '{}' lists index '{idx}' twice",
                        f.name
                    )));
                }
                seen.push(idx);
            }
            let cells = space.shape_of(&f.indices)?.iter().product::<usize>().max(1);
            f.prior.validate(cells, &f.name)?;
        }

        let mut coupling = Vec::with_capacity(observations.len());
        let mut connected = Vec::with_capacity(observations.len());
        let mut latent = Vec::with_capacity(observations.len());
        for (pos, o) in observations.iter().enumerate() {
            if observations[..pos].iter().any(|p| p.name == o.name) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate observation '{}'",
                    o.name
                )));
            }
            let mut seen = Vec::new();
            for idx in &o.indices {
                space.cardinality(idx)?;
                if seen.contains(&idx) {
                    return Err(Error::InvalidSpec(format!(
                        "observation '{}' lists index '{idx}' twice",
                        o.name
                    )));
                }
                seen.push(idx);
            }
            if o.factors.is_empty() {
                return Err(Error::InvalidSpec(format!(
                    "observation '{}' has no factors",
                    o.name
                )));
            }
            let mut row = vec![false; factors.len()];
            let mut conn = Vec::new();
            for fname in &o.factors {
                let Some(fpos) = factors.iter().position(|f| &f.name == fname) else {
                    return Err(Error::InvalidSpec(format!(
                        "observation '{}' references unknown factor '{fname}'",
                        o.name
                    )));
                };
                if row[fpos] {
                    // coupling exponents are restricted to {0, 1}
                    return Err(Error::InvalidSpec(format!(
                        "observation '{}' lists factor '{fname}' twice",
                        o.name
                    )));
                }
                row[fpos] = true;
                conn.push(fpos);
            }
            conn.sort_unstable();
            // every visible index must be produced by some connected factor
            for idx in &o.indices {
                let covered = conn
                    .iter()
                    .any(|&fpos| factors[fpos].indices.contains(idx));
                if !covered {
                    return Err(Error::UncoveredVisibleIndex {
                        observation: o.name.clone(),
                        index: idx.clone(),
                    });
                }
            }
            // summed-over indices: union of connected factor indices minus
            // the visible set, in space declaration order
            let lat: Vec<String> = space
                .names()
                .iter()
                .filter(|n| {
                    !o.indices.contains(n)
                        && conn.iter().any(|&fpos| factors[fpos].indices.contains(n))
                })
                .cloned()
                .collect();
            coupling.push(row);
            connected.push(conn);
            latent.push(lat);
        }

        for (fpos, f) in factors.iter().enumerate() {
            if !coupling.iter().any(|row| row[fpos]) {
                return Err(Error::OrphanFactor(f.name.clone()));
            }
        }

        Ok(Self {
            space,
            factors,
            observations,
            coupling,
            connected,
            latent,
        })
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    pub fn factors(&self) -> &[FactorDecl] {
        &self.factors
    }

    pub fn observations(&self) -> &[ObservationDecl] {
        &self.observations
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn factor_position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// R[nu][alpha].
    pub fn coupling(&self, nu: usize, alpha: usize) -> bool {
        self.coupling[nu][alpha]
    }

    pub fn coupling_matrix(&self) -> Vec<Vec<u8>> {
        self.coupling
            .iter()
            .map(|row| row.iter().map(|&b| u8::from(b)).collect())
            .collect()
    }

    /// Positions of the factors connected to observation `nu`.
    pub fn connected_factors(&self, nu: usize) -> &[usize] {
        &self.connected[nu]
    }

    /// The indices summed over when reconstructing observation `nu`
    /// (union of connected factor indices minus the visible indices).
    pub fn latent_indices(&self, nu: usize) -> &[String] {
        &self.latent[nu]
    }

    /// Observation shape (cardinalities of its visible indices).
    pub fn observation_shape(&self, nu: usize) -> Vec<usize> {
        self.space
            .shape_of(&self.observations[nu].indices)
            .expect("validated at construction")
    }

    /// Same model with every factor prior replaced by scalar (A, B).
    pub fn with_uniform_priors(&self, a: f64, b: f64) -> Result<Self> {
        let factors = self
            .factors
            .iter()
            .map(|f| FactorDecl {
                name: f.name.clone(),
                indices: f.indices.clone(),
                prior: PriorSpec::scalar(a, b),
            })
            .collect();
        Self::new(self.space.clone(), factors, self.observations.clone())
    }

    /// Parse the line-oriented model format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, usize)> = Vec::new();
        let mut factors: Vec<FactorDecl> = Vec::new();
        let mut observations: Vec<ObservationDecl> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            if stripped.trim().is_empty() {
                continue;
            }
            let tokens: Vec<&str> = stripped.split_whitespace().collect();
            match tokens[0] {
                "index" => {
                    if tokens.len() != 3 {
                        return Err(syntax(line, "expected: index <name> <cardinality>"));
                    }
                    let name = check_identifier(tokens[1], line)?;
                    let card: usize = tokens[2].parse().map_err(|_| {
                        syntax(line, &format!("bad cardinality '{}'", tokens[2]))
                    })?;
                    if card == 0 {
                        return Err(syntax(line, "cardinality must be at least 1"));
                    }
                    pairs.push((name, card));
                }
                "factor" => {
                    if tokens.len() < 3 {
                        return Err(syntax(line, "expected: factor <name> <idx,...> [A=<v>] [B=<v>]"));
                    }
                    let name = check_identifier(tokens[1], line)?;
                    let mut a = None;
                    let mut b = None;
                    let mut idx_part = String::new();
                    for tok in &tokens[2..] {
                        if let Some(v) = tok.strip_prefix("A=") {
                            a = Some(parse_prior_value(v, line)?);
                        } else if let Some(v) = tok.strip_prefix("B=") {
                            b = Some(parse_prior_value(v, line)?);
                        } else if tok.contains('=') {
                            return Err(syntax(line, &format!("unknown option '{tok}'")));
                        } else {
                            idx_part.push_str(tok);
                        }
                    }
                    let indices = split_name_list(&idx_part, line)?;
                    factors.push(FactorDecl {
                        name,
                        indices,
                        prior: PriorSpec::scalar(
                            a.unwrap_or(DEFAULT_PRIOR_SHAPE),
                            b.unwrap_or(DEFAULT_PRIOR_MEAN),
                        ),
                    });
                }
                "observe" => {
                    let Some(eq) = stripped.find('=') else {
                        return Err(syntax(line, "expected: observe <name> <idx,...> = <factor,...>"));
                    };
                    let lhs: Vec<&str> = stripped[..eq].split_whitespace().collect();
                    if lhs.len() < 3 {
                        return Err(syntax(line, "expected: observe <name> <idx,...> = <factor,...>"));
                    }
                    let name = check_identifier(lhs[1], line)?;
                    let indices = split_name_list(&lhs[2..].concat(), line)?;
                    let rhs: String = stripped[eq + 1..].split_whitespace().collect();
                    let factor_names = split_name_list(&rhs, line)?;
                    observations.push(ObservationDecl {
                        name,
                        indices,
                        factors: factor_names,
                    });
                }
                other => {
                    return Err(syntax(line, &format!("unknown declaration '{other}'")));
                }
            }
        }

        let space = IndexSpace::new(pairs).map_err(|e| Error::SyntaxError {
            line: 0,
            message: e.to_string(),
        })?;
        Self::new(space, factors, observations)
    }

    /// Canonical text form; `parse(to_text(m)) == m`. Per-cell prior arrays
    /// have no file representation and are rejected.
    pub fn to_text(&self) -> Result<String> {
        use std::fmt::Write;
        let mut out = String::new();
        for (name, card) in self
            .space
            .names()
            .iter()
            .map(|n| (n, self.space.cardinality(n).unwrap()))
        {
            writeln!(out, "index {name} {card}").unwrap();
        }
        for f in &self.factors {
            let (PriorField::Scalar(a), PriorField::Scalar(b)) = (&f.prior.a, &f.prior.b) else {
                return Err(Error::InvalidSpec(format!(
                    "factor '{}' has per-cell priors, which the text format cannot express",
                    f.name
                )));
            };
            writeln!(
                out,
                "factor {} {} A={a} B={b}",
                f.name,
                f.indices.join(",")
            )
            .unwrap();
        }
        for o in &self.observations {
            writeln!(
                out,
                "observe {} {} = {}",
                o.name,
                o.indices.join(","),
                o.factors.join(",")
            )
            .unwrap();
        }
        Ok(out)
    }
}

fn syntax(line: usize, message: &str) -> Error {
    Error::SyntaxError {
        line,
        message: message.to_string(),
    }
}

fn check_identifier(tok: &str, line: usize) -> Result<String> {
    if tok.is_empty() || tok.chars().any(|c| c == ',' || c == '=' || c == '#') {
        return Err(syntax(line, &format!("bad identifier '{tok}'")));
    }
    Ok(tok.to_string())
}

fn split_name_list(joined: &str, line: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for part in joined.split(',') {
        if part.is_empty() {
            return Err(syntax(line, "empty name in comma-separated list"));
        }
        out.push(check_identifier(part, line)?);
    }
    Ok(out)
}

fn parse_prior_value(v: &str, line: usize) -> Result<f64> {
    let parsed: f64 = v
        .parse()
        .map_err(|_| syntax(line, &format!("bad prior value '{v}'")))?;
    Ok(parsed)
}
