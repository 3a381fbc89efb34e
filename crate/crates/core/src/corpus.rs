//! Triple corpora: symbol interning, count indices and argument-reversal
//! augmentation.
//!
//! A corpus is a multiset of observations `r(s, o)`. Building one computes
//! every statistic the scorers need:
//!
//! - `n`, the total number of observations,
//! - `n_rt`, the multiplicity of each observed `(relation, tuple)` pair,
//! - `n_r` and `n_t`, the relation and tuple marginals,
//! - `T_r`, the set of tuples observed with relation `r`.
//!
//! The corpus is immutable once built. Augmentation produces a new corpus.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

/// Marker appended to a relation name to form its reversed counterpart.
/// Input relations carrying this suffix are rejected.
pub const REVERSED_SUFFIX: &str = "@rev";

const SNAPSHOT_MAGIC: &[u8; 8] = b"RELIMPC\0";
const SNAPSHOT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArgumentId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ArgumentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An ordered argument pair. `(s, o)` and `(o, s)` are different tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple {
    pub subject: ArgumentId,
    pub object: ArgumentId,
}

impl Tuple {
    pub fn new(subject: ArgumentId, object: ArgumentId) -> Self {
        Tuple { subject, object }
    }

    pub fn flipped(self) -> Self {
        Tuple {
            subject: self.object,
            object: self.subject,
        }
    }
}

/// A single proposition `relation(subject, object)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub relation: RelationId,
    pub subject: ArgumentId,
    pub object: ArgumentId,
}

impl Triple {
    pub fn new(relation: RelationId, subject: ArgumentId, object: ArgumentId) -> Self {
        Triple {
            relation,
            subject,
            object,
        }
    }

    pub fn tuple(&self) -> Tuple {
        Tuple::new(self.subject, self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate symbol `{name}`")));
            }
        }
        Ok(Interner { names, index })
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// Accumulates triples before the count indices are built.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    relations: Interner,
    arguments: Interner,
    observations: Vec<Triple>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, relation: &str, subject: &str, object: &str) -> Result<Triple> {
        if relation.is_empty() || subject.is_empty() || object.is_empty() {
            return Err(Error::Parse {
                line: self.observations.len() + 1,
                message: "empty field".into(),
            });
        }
        if relation.ends_with(REVERSED_SUFFIX) {
            return Err(Error::Parse {
                line: self.observations.len() + 1,
                message: format!("relation `{relation}` uses the reserved suffix `{REVERSED_SUFFIX}`"),
            });
        }
        let triple = Triple::new(
            RelationId(self.relations.intern(relation)),
            ArgumentId(self.arguments.intern(subject)),
            ArgumentId(self.arguments.intern(object)),
        );
        self.observations.push(triple);
        Ok(triple)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn build(self) -> Result<Corpus> {
        if self.observations.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let base = self.relations.len();
        Ok(Corpus::from_parts(
            self.relations,
            self.arguments,
            self.observations,
            base,
            false,
        ))
    }
}

/// An immutable triple corpus with its count indices.
#[derive(Clone, PartialEq, Eq)]
pub struct Corpus {
    relations: Interner,
    arguments: Interner,
    observations: Vec<Triple>,
    base_relations: usize,
    augmented: bool,
    // T_r with n_rt, sorted by tuple
    relation_tuples: Vec<Vec<(Tuple, u64)>>,
    relation_counts: Vec<u64>,
    tuple_counts: Vec<(Tuple, u64)>,
    subject_counts: Vec<u64>,
    object_counts: Vec<u64>,
}

impl fmt::Debug for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Corpus")
            .field("relations", &self.relations.len())
            .field("arguments", &self.arguments.len())
            .field("observations", &self.observations.len())
            .field("augmented", &self.augmented)
            .finish()
    }
}

impl Corpus {
    fn from_parts(
        relations: Interner,
        arguments: Interner,
        observations: Vec<Triple>,
        base_relations: usize,
        augmented: bool,
    ) -> Self {
        let mut per_relation: Vec<BTreeMap<Tuple, u64>> = vec![BTreeMap::new(); relations.len()];
        let mut tuples: BTreeMap<Tuple, u64> = BTreeMap::new();
        let mut relation_counts = vec![0u64; relations.len()];
        let mut subject_counts = vec![0u64; arguments.len()];
        let mut object_counts = vec![0u64; arguments.len()];
        for obs in &observations {
            *per_relation[obs.relation.index()]
                .entry(obs.tuple())
                .or_default() += 1;
            *tuples.entry(obs.tuple()).or_default() += 1;
            relation_counts[obs.relation.index()] += 1;
            subject_counts[obs.subject.index()] += 1;
            object_counts[obs.object.index()] += 1;
        }
        Corpus {
            relations,
            arguments,
            observations,
            base_relations,
            augmented,
            relation_tuples: per_relation
                .into_iter()
                .map(|m| m.into_iter().collect())
                .collect(),
            relation_counts,
            tuple_counts: tuples.into_iter().collect(),
            subject_counts,
            object_counts,
        }
    }

    /// Reads `relation<TAB>subject<TAB>object` lines. Blank lines are skipped;
    /// repeated lines increase multiplicity.
    pub fn ingest<R: BufRead>(reader: R) -> Result<Corpus> {
        let mut builder = CorpusBuilder::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            builder
                .add(fields[0], fields[1], fields[2])
                .map_err(|e| match e {
                    Error::Parse { message, .. } => Error::Parse {
                        line: i + 1,
                        message,
                    },
                    other => other,
                })?;
        }
        builder.build()
    }

    pub fn from_triples<'a, I>(triples: I) -> Result<Corpus>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut builder = CorpusBuilder::new();
        for (r, s, o) in triples {
            builder.add(r, s, o)?;
        }
        builder.build()
    }

    /// Adds a relation `r@rev` for every relation `r` and, for every
    /// observation `r(s, o)`, the paired observation `r@rev(o, s)`.
    ///
    /// Reversed relations take ids `base + r`, so original ids are unchanged.
    pub fn augment_reversed(&self) -> Result<Corpus> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let base = self.relations.len();
        let mut names = self.relations.names.clone();
        names.extend(
            self.relations
                .names
                .iter()
                .map(|n| format!("{n}{REVERSED_SUFFIX}")),
        );
        let relations = Interner::from_names(names)?;
        let mut observations = self.observations.clone();
        observations.extend(self.observations.iter().map(|t| {
            Triple::new(RelationId(t.relation.0 + base as u32), t.object, t.subject)
        }));
        Ok(Corpus::from_parts(
            relations,
            self.arguments.clone(),
            observations,
            base,
            true,
        ))
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Total number of observations, `n`.
    pub fn len(&self) -> u64 {
        self.observations.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Number of relations present in the input, excluding reversed ones.
    pub fn num_base_relations(&self) -> usize {
        self.base_relations
    }

    pub fn num_arguments(&self) -> usize {
        self.arguments.len()
    }

    pub fn observations(&self) -> &[Triple] {
        &self.observations
    }

    /// Observations over input relations only. Augmentation appends the
    /// reversed copies, so this is a prefix.
    pub fn base_observations(&self) -> &[Triple] {
        if self.augmented {
            &self.observations[..self.observations.len() / 2]
        } else {
            &self.observations
        }
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn argument_id(&self, name: &str) -> Option<ArgumentId> {
        self.arguments.get(name).map(ArgumentId)
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations.names[r.index()]
    }

    pub fn argument_name(&self, a: ArgumentId) -> &str {
        &self.arguments.names[a.index()]
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    /// The partner of `r` under reversal, if the corpus is augmented.
    pub fn reversed(&self, r: RelationId) -> Option<RelationId> {
        if !self.augmented || r.index() >= self.relations.len() {
            return None;
        }
        let base = self.base_relations as u32;
        Some(if r.0 < base {
            RelationId(r.0 + base)
        } else {
            RelationId(r.0 - base)
        })
    }

    /// Maps a relation to the input relation it is derived from, with a flag
    /// set when its argument order is flipped.
    pub fn base_relation(&self, r: RelationId) -> (RelationId, bool) {
        if r.index() >= self.base_relations {
            (RelationId(r.0 - self.base_relations as u32), true)
        } else {
            (r, false)
        }
    }

    pub fn is_observed(&self, r: RelationId) -> bool {
        self.relation_counts.get(r.index()).is_some_and(|&c| c > 0)
    }

    pub(crate) fn check_relation(&self, r: RelationId) -> Result<()> {
        if self.is_observed(r) {
            Ok(())
        } else {
            Err(Error::UnobservedRelation(r.0))
        }
    }

    /// `n_r`
    pub fn relation_count(&self, r: RelationId) -> u64 {
        self.relation_counts.get(r.index()).copied().unwrap_or(0)
    }

    /// `n_t`
    pub fn tuple_count(&self, t: Tuple) -> u64 {
        self.tuple_counts
            .binary_search_by(|(x, _)| x.cmp(&t))
            .map(|i| self.tuple_counts[i].1)
            .unwrap_or(0)
    }

    /// `n_rt`
    pub fn count(&self, r: RelationId, t: Tuple) -> u64 {
        let Some(tuples) = self.relation_tuples.get(r.index()) else {
            return 0;
        };
        tuples
            .binary_search_by(|(x, _)| x.cmp(&t))
            .map(|i| tuples[i].1)
            .unwrap_or(0)
    }

    pub fn contains(&self, r: RelationId, t: Tuple) -> bool {
        self.count(r, t) > 0
    }

    /// `T_r` paired with `n_rt`, sorted by tuple.
    pub fn relation_tuples(&self, r: RelationId) -> &[(Tuple, u64)] {
        self.relation_tuples
            .get(r.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every observed tuple with `n_t`, sorted.
    pub fn tuples(&self) -> &[(Tuple, u64)] {
        &self.tuple_counts
    }

    pub fn subject_count(&self, a: ArgumentId) -> u64 {
        self.subject_counts.get(a.index()).copied().unwrap_or(0)
    }

    pub fn object_count(&self, a: ArgumentId) -> u64 {
        self.object_counts.get(a.index()).copied().unwrap_or(0)
    }

    /// Pointwise mutual information of relation `r` and tuple `t`:
    /// `log(P(r,t) / (P(r) P(t)))` under the empirical distribution.
    pub fn pmi_weight(&self, r: RelationId, t: Tuple) -> Result<f64> {
        let n_rt = self.count(r, t);
        if n_rt == 0 {
            return Err(Error::UnobservedPair {
                relation: r.0,
                subject: t.subject.0,
                object: t.object.0,
            });
        }
        let n = self.len() as f64;
        let joint = n_rt as f64 / n;
        let pr = self.relation_count(r) as f64 / n;
        let pt = self.tuple_count(t) as f64 / n;
        Ok((joint / (pr * pt)).ln())
    }

    /// Serializes the corpus to the versioned snapshot layout:
    ///
    /// ```text
    /// magic "RELIMPC\0" | version u8 | flags u8 (bit 0: augmented)
    /// base_relations u32 | relation count u32 | names (u32 len + UTF-8)
    /// argument count u32 | names | observation count u64
    /// observations (relation u32, subject u32, object u32)
    /// ```
    ///
    /// All integers little-endian.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&[SNAPSHOT_VERSION, self.augmented as u8])?;
        w.write_all(&(self.base_relations as u32).to_le_bytes())?;
        write_names(&mut w, &self.relations.names)?;
        write_names(&mut w, &self.arguments.names)?;
        w.write_all(&(self.observations.len() as u64).to_le_bytes())?;
        for t in &self.observations {
            w.write_all(&t.relation.0.to_le_bytes())?;
            w.write_all(&t.subject.0.to_le_bytes())?;
            w.write_all(&t.object.0.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Corpus> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a corpus snapshot".into()));
        }
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        if head[0] != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", head[0])));
        }
        let augmented = match head[1] {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("unknown flags {f:#x}"))),
        };
        let base = read_u32(&mut r)? as usize;
        let relations = Interner::from_names(read_names(&mut r)?)?;
        let arguments = Interner::from_names(read_names(&mut r)?)?;
        let expected = if augmented { 2 * base } else { base };
        if relations.len() != expected {
            return Err(Error::Format(format!(
                "relation table has {} entries, expected {expected}",
                relations.len()
            )));
        }
        let n = read_u64(&mut r)? as usize;
        let mut observations = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let t = Triple::new(
                RelationId(read_u32(&mut r)?),
                ArgumentId(read_u32(&mut r)?),
                ArgumentId(read_u32(&mut r)?),
            );
            if t.relation.index() >= relations.len()
                || t.subject.index() >= arguments.len()
                || t.object.index() >= arguments.len()
            {
                return Err(Error::Format("observation id out of range".into()));
            }
            observations.push(t);
        }
        if observations.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after observations".into()));
        }
        Ok(Corpus::from_parts(
            relations,
            arguments,
            observations,
            base,
            augmented,
        ))
    }
}

fn write_names<W: Write>(w: &mut W, names: &[String]) -> Result<()> {
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for name in names {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    Ok(())
}

fn read_names<R: Read>(r: &mut R) -> Result<Vec<String>> {
    let count = read_u32(r)? as usize;
    let mut names = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        names.push(String::from_utf8(buf).map_err(|_| Error::Format("symbol is not UTF-8".into()))?);
    }
    Ok(names)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
