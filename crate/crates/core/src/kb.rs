//! The movie knowledge base: subject-relation-objects triples, question
//! templates with paraphrases, split-specific question corruption, and the
//! per-task fact hiding that produces each episode's visible KB view.

use crate::numerics::{fnv1a, RngStream};
use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {0}: malformed fact line `{1}`")]
    MalformedLine(usize, String),
    #[error("line {0}: unknown relation `{1}`")]
    UnknownRelation(usize, String),
    #[error("line {0}: duplicate fact")]
    DuplicateFact(usize),
    #[error("line {0}: duplicate tail in fact")]
    DuplicateTail(usize),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("paraphrase index {0} out of range (template has {1})")]
    ParaphraseOutOfRange(usize, usize),
    #[error("KB too small: {0}")]
    TooSmall(String),
}

/// Dialogue task identifier, 1 through 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u8);

impl TaskId {
    pub fn new(n: u8) -> Option<TaskId> {
        (1..=9).contains(&n).then_some(TaskId(n))
    }

    /// Tasks 5-9 hide KB facts; 1-4 leave the view intact.
    pub fn hides_facts(self) -> bool {
        self.0 >= 5
    }

    /// Tasks 1-2 corrupt the teacher's question with split-specific typos.
    pub fn corrupts_question(self) -> bool {
        self.0 <= 2
    }

    /// Tasks 2 and 4 give the student a choice of question to ask.
    pub fn has_question_choice(self) -> bool {
        self.0 == 2 || self.0 == 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Movie,
    Person,
    Year,
    Genre,
}

/// Opaque entity id, unique within one KnowledgeBase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub surface: String,
    pub kind: EntityKind,
}

impl Entity {
    /// Single-token form: internal spaces become underscores.
    pub fn token(&self) -> String {
        self.surface.replace(' ', "_")
    }
}

/// Relation name, one of the closed set declared in the KB header.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Relation(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KBFact {
    pub head: EntityId,
    pub relation: Relation,
    pub tails: Vec<EntityId>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub relations: Vec<Relation>,
    entities: Vec<Entity>,
    surface_to_id: IndexMap<String, EntityId>,
    pub facts: Vec<KBFact>,
    by_entity: IndexMap<EntityId, Vec<usize>>,
    by_relation: IndexMap<Relation, Vec<usize>>,
}

impl KnowledgeBase {
    pub fn new(relations: Vec<Relation>) -> Self {
        KnowledgeBase {
            relations,
            entities: Vec::new(),
            surface_to_id: IndexMap::new(),
            facts: Vec::new(),
            by_entity: IndexMap::new(),
            by_relation: IndexMap::new(),
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.0]
    }

    pub fn lookup(&self, surface: &str) -> Option<EntityId> {
        self.surface_to_id.get(surface).copied()
    }

    /// Interns an entity surface, creating it on first sight. The kind of an
    /// existing entity is left untouched.
    pub fn intern(&mut self, surface: &str, kind: EntityKind) -> EntityId {
        if let Some(id) = self.surface_to_id.get(surface) {
            return *id;
        }
        let id = EntityId(self.entities.len());
        self.entities.push(Entity { id, surface: surface.to_string(), kind });
        self.surface_to_id.insert(surface.to_string(), id);
        id
    }

    pub fn add_fact(&mut self, fact: KBFact) -> Result<(), KbError> {
        let mut seen = IndexSet::new();
        for t in &fact.tails {
            if !seen.insert(*t) {
                return Err(KbError::DuplicateTail(0));
            }
        }
        if self.facts.contains(&fact) {
            return Err(KbError::DuplicateFact(0));
        }
        let idx = self.facts.len();
        self.by_entity.entry(fact.head).or_default().push(idx);
        for t in &fact.tails {
            let bucket = self.by_entity.entry(*t).or_default();
            if bucket.last() != Some(&idx) {
                bucket.push(idx);
            }
        }
        self.by_relation.entry(fact.relation.clone()).or_default().push(idx);
        self.facts.push(fact);
        Ok(())
    }

    /// All facts mentioning `id` as head or tail, in KB order.
    pub fn facts_mentioning(&self, id: EntityId) -> Vec<&KBFact> {
        self.by_entity
            .get(&id)
            .map(|idxs| idxs.iter().map(|i| &self.facts[*i]).collect())
            .unwrap_or_default()
    }

    pub fn facts_with_relation(&self, rel: &Relation) -> Vec<&KBFact> {
        self.by_relation
            .get(rel)
            .map(|idxs| idxs.iter().map(|i| &self.facts[*i]).collect())
            .unwrap_or_default()
    }

    /// All facts mentioning the question entity or any answer entity,
    /// deduplicated, in KB order. This is the episode's base KB view.
    pub fn relevant_facts(
        &self,
        q_entity: EntityId,
        answers: &[EntityId],
    ) -> Result<Vec<KBFact>, KbError> {
        if q_entity.0 >= self.entities.len() {
            return Err(KbError::UnknownEntity(format!("#{}", q_entity.0)));
        }
        let mut idxs: IndexSet<usize> = IndexSet::new();
        if let Some(list) = self.by_entity.get(&q_entity) {
            idxs.extend(list.iter().copied());
        }
        for a in answers {
            if let Some(list) = self.by_entity.get(a) {
                idxs.extend(list.iter().copied());
            }
        }
        let mut sorted: Vec<usize> = idxs.into_iter().collect();
        sorted.sort_unstable();
        Ok(sorted.into_iter().map(|i| self.facts[i].clone()).collect())
    }

    /// Answers to (q_entity, relation, direction): tails of the head's facts,
    /// or heads whose fact's tails mention q_entity.
    pub fn answers(
        &self,
        q_entity: EntityId,
        relation: &Relation,
        direction: Direction,
    ) -> Vec<EntityId> {
        let mut out: IndexSet<EntityId> = IndexSet::new();
        for fact in self.facts_mentioning(q_entity) {
            if &fact.relation != relation {
                continue;
            }
            match direction {
                Direction::HeadToTail if fact.head == q_entity => {
                    out.extend(fact.tails.iter().copied());
                }
                Direction::TailToHead if fact.tails.contains(&q_entity) => {
                    out.insert(fact.head);
                }
                _ => {}
            }
        }
        out.into_iter().collect()
    }

    /// Serialize to the KB file format. `parse_kb` of the output reproduces
    /// the KB; re-serializing reproduces the bytes.
    pub fn write(&self) -> String {
        let mut out = String::new();
        for rel in &self.relations {
            out.push_str("#relation ");
            out.push_str(&rel.0);
            out.push('\n');
        }
        for fact in &self.facts {
            out.push_str(&self.entity(fact.head).surface);
            out.push('|');
            out.push_str(&fact.relation.0);
            out.push('|');
            let tails: Vec<&str> =
                fact.tails.iter().map(|t| self.entity(*t).surface.as_str()).collect();
            out.push_str(&tails.join(","));
            out.push('\n');
        }
        out
    }

    /// Render one fact as dialogue text, entity surfaces in single-token form.
    pub fn fact_text(&self, fact: &KBFact) -> String {
        let tails: Vec<String> = fact.tails.iter().map(|t| self.entity(*t).token()).collect();
        format!("{} {} {}", self.entity(fact.head).token(), fact.relation.0, tails.join(", "))
    }
}

/// Parse the KB file format: `#relation <name>` header lines declare the
/// closed relation set, fact lines are `<head>|<relation>|<tail1>[,<tail2>..]`,
/// other `#` lines are comments.
pub fn parse_kb(source: &str) -> Result<KnowledgeBase, KbError> {
    let mut relations: Vec<Relation> = Vec::new();
    let mut pending: Vec<(usize, String)> = Vec::new();
    for (lineno, raw) in source.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#relation ") {
            relations.push(Relation(rest.trim().to_string()));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        pending.push((lineno + 1, line.to_string()));
    }
    let mut kb = KnowledgeBase::new(relations);
    for (lineno, line) in pending {
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 3 || parts[0].is_empty() || parts[2].is_empty() {
            return Err(KbError::MalformedLine(lineno, line.clone()));
        }
        let relation = Relation(parts[1].to_string());
        if !kb.relations.contains(&relation) {
            return Err(KbError::UnknownRelation(lineno, parts[1].to_string()));
        }
        let head_kind = kind_for(&relation, true);
        let tail_kind = kind_for(&relation, false);
        let head = kb.intern(parts[0], head_kind);
        let mut tails = Vec::new();
        for t in parts[2].split(',') {
            if t.is_empty() {
                return Err(KbError::MalformedLine(lineno, line.clone()));
            }
            tails.push(kb.intern(t, tail_kind));
        }
        kb.add_fact(KBFact { head, relation, tails }).map_err(|e| match e {
            KbError::DuplicateFact(_) => KbError::DuplicateFact(lineno),
            KbError::DuplicateTail(_) => KbError::DuplicateTail(lineno),
            other => other,
        })?;
    }
    Ok(kb)
}

fn kind_for(relation: &Relation, head: bool) -> EntityKind {
    if head {
        return EntityKind::Movie;
    }
    match relation.0.as_str() {
        "release_year" => EntityKind::Year,
        "has_genre" => EntityKind::Genre,
        _ => EntityKind::Person,
    }
}

/// Which side of the triple the question gives and which it asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Question names the head (movie), answer is a tail.
    HeadToTail,
    /// Question names a tail, answer is the head (movie).
    TailToHead,
}

/// A question template: several paraphrase surfaces with one `{}` entity slot
/// each, plus the content keywords the corruption schemes may misspell.
#[derive(Debug, Clone)]
pub struct QuestionTemplate {
    pub relation: Relation,
    pub direction: Direction,
    pub surfaces: Vec<&'static str>,
    pub keywords: Vec<&'static str>,
}

impl QuestionTemplate {
    /// Substitute the entity surface into paraphrase `paraphrase_index`.
    pub fn render(&self, entity: &Entity, paraphrase_index: usize) -> Result<String, KbError> {
        let surface = self
            .surfaces
            .get(paraphrase_index)
            .ok_or(KbError::ParaphraseOutOfRange(paraphrase_index, self.surfaces.len()))?;
        Ok(surface.replacen("{}", &entity.surface, 1))
    }
}

/// The fixed template inventory: the three person-valued relations in both
/// directions, at least two paraphrases each. Year and genre facts stay in
/// the KB as view content but are never asked about: their closed value sets
/// are shared by every split, so they cannot serve as held-out knowledge.
pub fn question_templates() -> Vec<QuestionTemplate> {
    let t = |rel: &str, dir: Direction, surfaces: Vec<&'static str>, kws: Vec<&'static str>| {
        QuestionTemplate { relation: Relation(rel.to_string()), direction: dir, surfaces, keywords: kws }
    };
    vec![
        t(
            "starred_actors",
            Direction::TailToHead,
            vec!["Which movie did {} star in ?", "Which film did {} appear in ?"],
            vec!["movie", "star", "film", "appear"],
        ),
        t(
            "starred_actors",
            Direction::HeadToTail,
            vec!["Who starred in the movie {} ?", "Which actors appeared in {} ?"],
            vec!["starred", "movie", "actors", "appeared"],
        ),
        t(
            "directed_by",
            Direction::TailToHead,
            vec!["Which movie did {} direct ?", "Which film was directed by {} ?"],
            vec!["movie", "direct", "film", "directed"],
        ),
        t(
            "directed_by",
            Direction::HeadToTail,
            vec!["Who directed the movie {} ?", "Who was the director of {} ?"],
            vec!["directed", "movie", "director"],
        ),
        t(
            "written_by",
            Direction::TailToHead,
            vec!["Which movie was penned by {} ?", "Which film was written by {} ?"],
            vec!["movie", "penned", "film", "written"],
        ),
        t(
            "written_by",
            Direction::HeadToTail,
            vec!["Who was the author of the movie {} ?", "Who wrote {} ?"],
            vec!["author", "movie", "wrote"],
        ),
    ]
}

/// Every keyword appearing in any template, deduplicated, in template order.
pub fn all_keywords() -> Vec<&'static str> {
    let mut out: IndexSet<&'static str> = IndexSet::new();
    for t in question_templates() {
        out.extend(t.keywords.iter().copied());
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Split-specific misspelling rule. The three splits corrupt every keyword in
/// pairwise distinct ways, all distinct from the original word.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionScheme {
    pub split: Split,
}

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

impl CorruptionScheme {
    pub fn new(split: Split) -> Self {
        CorruptionScheme { split }
    }

    /// Misspell one keyword.
    ///
    /// train: double the last consonant that is immediately followed by a
    ///        vowel ("movie" -> "movvie", "star" -> "sttar");
    /// dev:   swap the first two letters;
    /// test:  drop the first vowel.
    pub fn corrupt_word(&self, word: &str) -> String {
        let chars: Vec<char> = word.chars().collect();
        match self.split {
            Split::Train => {
                let mut pos = None;
                for i in 0..chars.len().saturating_sub(1) {
                    if !VOWELS.contains(&chars[i]) && VOWELS.contains(&chars[i + 1]) {
                        pos = Some(i);
                    }
                }
                let pos = pos
                    .or_else(|| chars.iter().rposition(|c| !VOWELS.contains(c)))
                    .unwrap_or(chars.len().saturating_sub(1));
                let mut out: Vec<char> = Vec::with_capacity(chars.len() + 1);
                for (i, c) in chars.iter().enumerate() {
                    out.push(*c);
                    if i == pos {
                        out.push(*c);
                    }
                }
                out.into_iter().collect()
            }
            Split::Dev => {
                let mut out = chars;
                if out.len() >= 2 {
                    out.swap(0, 1);
                }
                out.into_iter().collect()
            }
            Split::Test => {
                let first_vowel = chars.iter().position(|c| VOWELS.contains(c));
                match first_vowel {
                    Some(i) => {
                        let mut out = chars;
                        out.remove(i);
                        out.into_iter().collect()
                    }
                    None => {
                        let mut out: String = chars.into_iter().collect();
                        out.push('x');
                        out
                    }
                }
            }
        }
    }

    /// Replace every whole-word keyword occurrence in a rendered question.
    /// Entity surfaces are never keywords, so they pass through untouched.
    pub fn corrupt_question(&self, question: &str, template: &QuestionTemplate) -> String {
        question
            .split(' ')
            .map(|w| {
                if template.keywords.contains(&w) {
                    self.corrupt_word(w)
                } else {
                    w.to_string()
                }
            })
            .collect::<Vec<String>>()
            .join(" ")
    }
}

/// Remove facts from the visible view per task. Tasks 1-4 are the identity.
///
/// Task 5: drop facts mentioning the question entity.
/// Task 6: drop facts mentioning any answer entity.
/// Task 7: drop facts carrying the question's relation.
/// Task 8: drop only the triple(s) linking question entity to an answer
///         under the relation.
/// Task 9: drop facts mentioning the question entity, any answer, or the
///         relation.
pub fn hide_facts(
    view: &[KBFact],
    task: TaskId,
    q_entity: EntityId,
    relation: &Relation,
    answers: &[EntityId],
) -> Vec<KBFact> {
    let mentions = |f: &KBFact, id: EntityId| f.head == id || f.tails.contains(&id);
    let mentions_any = |f: &KBFact, ids: &[EntityId]| ids.iter().any(|id| mentions(f, *id));
    view.iter()
        .filter(|f| match task.0 {
            5 => !mentions(f, q_entity),
            6 => !mentions_any(f, answers),
            7 => f.relation != *relation,
            8 => {
                !(f.relation == *relation
                    && (mentions(f, q_entity) && mentions_any(f, answers)))
            }
            9 => {
                !(mentions(f, q_entity)
                    || mentions_any(f, answers)
                    || f.relation == *relation)
            }
            _ => true,
        })
        .cloned()
        .collect()
}

/// Parameters for the synthetic KB generator.
#[derive(Debug, Clone)]
pub struct KbGenConfig {
    pub n_movies: usize,
    pub n_people: usize,
    pub seed: u64,
}

impl Default for KbGenConfig {
    fn default() -> Self {
        KbGenConfig { n_movies: 200, n_people: 150, seed: 0 }
    }
}

const FIRST_NAMES: [&str; 40] = [
    "Ada", "Bruno", "Clara", "Derek", "Elena", "Felix", "Greta", "Hugo", "Iris", "Jonas", "Kira",
    "Lars", "Mona", "Nils", "Opal", "Piotr", "Quinn", "Rosa", "Sven", "Tara", "Ulric", "Vera",
    "Wade", "Yara", "Anselm", "Beatrix", "Casimir", "Dagny", "Emeric", "Freya", "Gideon",
    "Hazel", "Ignaz", "Juno", "Klaas", "Leonor", "Matthias", "Noor", "Otillie", "Petra",
];

const LAST_NAMES: [&str; 40] = [
    "Abbott", "Barnes", "Calder", "Draper", "Ellison", "Fontaine", "Garber", "Holloway", "Ingram",
    "Jensen", "Keller", "Lindqvist", "Mercer", "Novak", "Osborne", "Prescott", "Quill", "Ramsey",
    "Sutter", "Thorne", "Underhill", "Vance", "Whitaker", "Zhao", "Ashford", "Birkeland",
    "Castellan", "Durnford", "Eastgate", "Fairweather", "Granholm", "Hartwell", "Ironwood",
    "Jarndyce", "Kirkbride", "Larkspur", "Moreland", "Northcote", "Ostrander", "Pemberton",
];

const TITLE_ADJ: [&str; 20] = [
    "Silent", "Crimson", "Hidden", "Broken", "Golden", "Lonely", "Frozen", "Distant", "Electric",
    "Hollow", "Midnight", "Scarlet", "Wandering", "Forgotten", "Burning", "Quiet", "Savage",
    "Gilded", "Restless", "Pale",
];

const TITLE_NOUN: [&str; 20] = [
    "Horizon", "Harbor", "Orchard", "Compass", "Lantern", "Meridian", "Summit", "Archive",
    "Carousel", "Voyage", "Garden", "Signal", "Outpost", "Cathedral", "Crossing", "Furnace",
    "Labyrinth", "Monsoon", "Parallel", "Threshold",
];

const GENRES: [&str; 8] =
    ["drama", "comedy", "thriller", "horror", "sci-fi", "romance", "western", "documentary"];

/// Generate a synthetic KB: each movie gets a director, 1-3 actors, a writer,
/// a release year and a genre. Deterministic in the seed.
///
/// Every person holds exactly one credit. If people were shared between
/// movies, a question whose relevant facts are hidden (tasks 5 and 9) could
/// still be answered by reading the person out of another movie's credit
/// line, so the knowledge-acquisition tasks would not actually be blind.
/// `n_people` is therefore only a validation floor; the cast size is
/// determined by the movie count.
pub fn generate_kb(config: &KbGenConfig) -> Result<KnowledgeBase, KbError> {
    if config.n_movies == 0 || config.n_people < 4 {
        return Err(KbError::TooSmall(format!(
            "need at least 1 movie and 4 people, got {} and {}",
            config.n_movies, config.n_people
        )));
    }
    let mut rng = RngStream::new(config.seed, fnv1a(b"kb-gen"));
    let relations = ["directed_by", "starred_actors", "written_by", "release_year", "has_genre"]
        .iter()
        .map(|r| Relation(r.to_string()))
        .collect();
    let mut kb = KnowledgeBase::new(relations);

    // The full name universe, shuffled once, feeds per-partition queues so
    // every movie can be cast entirely from its own partition (see
    // `entity_partition`). Names are consumed without replacement.
    let mut universe: Vec<String> = Vec::new();
    for first in FIRST_NAMES {
        for last in LAST_NAMES {
            universe.push(format!("{first} {last}"));
        }
    }
    for i in (1..universe.len()).rev() {
        universe.swap(i, rng.below(i + 1));
    }
    let mut pools: IndexMap<Split, Vec<String>> = IndexMap::new();
    let mut walk = universe.into_iter();
    let mut draw = |pools: &mut IndexMap<Split, Vec<String>>, partition: Split| {
        loop {
            if let Some(name) = pools.entry(partition).or_default().pop() {
                return Ok(name);
            }
            let name = walk.next().ok_or_else(|| {
                KbError::TooSmall(format!(
                    "name universe exhausted casting the {} partition",
                    partition.name()
                ))
            })?;
            pools.entry(surface_partition(&name)).or_default().push(name);
        }
    };

    let mut titles: Vec<String> = Vec::new();
    let mut seen_titles = IndexSet::new();
    while titles.len() < config.n_movies {
        let base = format!(
            "The {} {}",
            TITLE_ADJ[rng.below(TITLE_ADJ.len())],
            TITLE_NOUN[rng.below(TITLE_NOUN.len())]
        );
        let title = if seen_titles.contains(&base) {
            format!("{} {}", base, 2 + titles.iter().filter(|t| t.starts_with(&base)).count())
        } else {
            base
        };
        if seen_titles.insert(title.clone()) {
            titles.push(title);
        }
    }

    let rel = |name: &str| Relation(name.to_string());
    for title in &titles {
        let movie = kb.intern(title, EntityKind::Movie);
        let partition = surface_partition(title);
        let director = kb.intern(&draw(&mut pools, partition)?, EntityKind::Person);
        kb.add_fact(KBFact { head: movie, relation: rel("directed_by"), tails: vec![director] })
            .ok();
        let n_actors = 1 + rng.below(3);
        let mut actors: Vec<EntityId> = Vec::new();
        for _ in 0..n_actors {
            actors.push(kb.intern(&draw(&mut pools, partition)?, EntityKind::Person));
        }
        kb.add_fact(KBFact { head: movie, relation: rel("starred_actors"), tails: actors }).ok();
        let writer = kb.intern(&draw(&mut pools, partition)?, EntityKind::Person);
        kb.add_fact(KBFact { head: movie, relation: rel("written_by"), tails: vec![writer] }).ok();
        let year = kb.intern(&format!("{}", 1950 + rng.below(70)), EntityKind::Year);
        kb.add_fact(KBFact { head: movie, relation: rel("release_year"), tails: vec![year] }).ok();
        let genre = kb.intern(GENRES[rng.below(GENRES.len())], EntityKind::Genre);
        kb.add_fact(KBFact { head: movie, relation: rel("has_genre"), tails: vec![genre] }).ok();
    }
    Ok(kb)
}

/// A concrete question instance: the sampled (entity, relation, direction)
/// triple plus its template and answers.
#[derive(Debug, Clone)]
pub struct QuestionInstance {
    pub template_idx: usize,
    pub q_entity: EntityId,
    pub answers: Vec<EntityId>,
}

/// Deterministic partition of the movie/person population into train, dev and
/// test sub-populations, keyed by the entity surface. The generator casts each
/// movie exclusively from its own partition's people, so episodes about one
/// partition never mention another's entities: test-partition entities are
/// genuinely novel to a model trained on train-partition episodes. Year and
/// genre values are shared vocabulary and carry no partition.
pub fn entity_partition(entity: &Entity) -> Option<Split> {
    match entity.kind {
        EntityKind::Movie | EntityKind::Person => Some(surface_partition(&entity.surface)),
        EntityKind::Year | EntityKind::Genre => None,
    }
}

/// Hash-based 70/10/20 split of an entity surface.
pub fn surface_partition(surface: &str) -> Split {
    match fnv1a(surface.as_bytes()) % 10 {
        0..=6 => Split::Train,
        7 => Split::Dev,
        _ => Split::Test,
    }
}

/// Sample a question, retrying until the entity has answers under the
/// template's relation. With `partition` set, only entities of that
/// sub-population qualify (used by the knowledge-acquisition tasks, whose
/// held-out splits must concern entities unseen in training). With
/// `direction` set, only templates of that direction qualify: the
/// knowledge-acquisition tasks ask head-to-tail, because a tail-to-head
/// question's answer is the head of every one of its own credit lines, so
/// hiding the question entity's facts (task 5) would still leave the answer
/// in plain view.
pub fn sample_question(
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    partition: Option<Split>,
    direction: Option<Direction>,
    rng: &mut RngStream,
    max_retries: usize,
) -> Result<QuestionInstance, KbError> {
    for _ in 0..max_retries {
        let template_idx = rng.below(templates.len());
        let template = &templates[template_idx];
        if let Some(d) = direction {
            if template.direction != d {
                continue;
            }
        }
        let candidates = kb.facts_with_relation(&template.relation);
        if candidates.is_empty() {
            continue;
        }
        let fact = candidates[rng.below(candidates.len())];
        let q_entity = match template.direction {
            Direction::HeadToTail => fact.head,
            Direction::TailToHead => fact.tails[rng.below(fact.tails.len())],
        };
        if let Some(p) = partition {
            if entity_partition(kb.entity(q_entity)) != Some(p) {
                continue;
            }
        }
        let answers = kb.answers(q_entity, &template.relation, template.direction);
        if answers.is_empty() {
            continue;
        }
        return Ok(QuestionInstance { template_idx, q_entity, answers });
    }
    Err(KbError::TooSmall(format!(
        "no sampleable question for partition {:?}",
        partition.map(Split::name)
    )))
}
