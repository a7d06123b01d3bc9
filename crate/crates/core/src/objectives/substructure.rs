use super::ObjectiveError;
use crate::alphabet::Alphabet;
use crate::molecule::Molecule;

pub const MAX_PATTERN_ATOMS: usize = 8;

/// A pattern graph. Atoms match by alphabet index, bonds by exact order;
/// unbonded pattern pairs may be bonded in the target.
#[derive(Debug, Clone)]
pub struct Substructure {
    molecule: Molecule,
    min_hydrogens: Vec<u32>,
    automorphisms: u64,
}

impl Substructure {
    pub fn new(molecule: Molecule) -> Result<Self, ObjectiveError> {
        let n = molecule.len();
        Self::build(molecule, vec![0; n])
    }

    /// Requires pattern atom `i` to match a target atom with at least
    /// `min[i]` implicit hydrogens.
    pub fn with_min_hydrogens(self, min: Vec<u32>) -> Result<Self, ObjectiveError> {
        if min.len() != self.molecule.len() {
            return Err(ObjectiveError::Config(format!(
                "{} hydrogen bounds for a {}-atom pattern",
                min.len(),
                self.molecule.len()
            )));
        }
        Self::build(self.molecule, min)
    }

    fn build(molecule: Molecule, min_hydrogens: Vec<u32>) -> Result<Self, ObjectiveError> {
        if molecule.len() > MAX_PATTERN_ATOMS {
            return Err(ObjectiveError::Config(format!(
                "pattern has {} atoms, at most {MAX_PATTERN_ATOMS} allowed",
                molecule.len()
            )));
        }
        let mut p = Substructure {
            molecule,
            min_hydrogens,
            automorphisms: 1,
        };
        // hydrogen bounds on both sides are equal, so slack never rejects
        let hs = p.min_hydrogens.clone();
        p.automorphisms = embeddings(&p, &p.molecule, &|i| hs[i]).max(1);
        Ok(p)
    }

    pub fn molecule(&self) -> &Molecule {
        &self.molecule
    }
}

fn embeddings(p: &Substructure, target: &Molecule, slack: &dyn Fn(usize) -> u32) -> u64 {
    let n = p.molecule.len();
    if n > target.len() {
        return 0;
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; target.len()];
    fn go(
        i: usize,
        p: &Substructure,
        t: &Molecule,
        slack: &dyn Fn(usize) -> u32,
        map: &mut [usize],
        used: &mut [bool],
    ) -> u64 {
        if i == map.len() {
            return 1;
        }
        let mut count = 0;
        for u in 0..t.len() {
            if used[u] || t.atom(u) != p.molecule.atom(i) || slack(u) < p.min_hydrogens[i] {
                continue;
            }
            let fits = (0..i).all(|j| {
                let b = p.molecule.bond(i, j);
                b == 0 || t.bond(u, map[j]) == b
            });
            if !fits {
                continue;
            }
            map[i] = u;
            used[u] = true;
            count += go(i + 1, p, t, slack, map, used);
            used[u] = false;
        }
        count
    }
    go(0, p, target, slack, &mut map, &mut used)
}

/// Occurrences of `pattern` in `m`: injective embeddings divided by the
/// pattern's automorphisms.
pub fn substructure_count(m: &Molecule, pattern: &Substructure, alphabet: &Alphabet) -> u64 {
    embeddings(pattern, m, &|u| m.valence_slack(alphabet, u)) / pattern.automorphisms
}
