//! Splicing generated field contents into benign request/response pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dict::{message_fields, FieldDictionary, WordClass};
use super::encode::{decode_field, encode_field, inject_malicious, sample_mal_pos, MalPos, TokenSequence};
use super::gan::{train_field_gan, FieldGan, GanConfig};
use super::tokenize::{tokenize_content, DelimiterTemplate};
use super::GafError;
use crate::http::{
    is_token, parse_http_message, serialize_message, validate_message, Direction, Flow, FlowKey, HttpMessage, Label,
};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};

/// A field chosen for generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldSelector {
    /// The request target (field named after the method).
    RequestLine,
    /// The first header with this (lowercase) name, request side first.
    Header(String),
}

impl fmt::Display for FieldSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSelector::RequestLine => f.write_str("request-line"),
            FieldSelector::Header(h) => write!(f, "header:{h}"),
        }
    }
}

impl FromStr for FieldSelector {
    type Err = GafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "request-line" {
            return Ok(FieldSelector::RequestLine);
        }
        match s.strip_prefix("header:") {
            Some(h) if is_token(h.as_bytes()) => {
                Ok(FieldSelector::Header(h.to_ascii_lowercase()))
            }
            _ => Err(GafError::InvalidConfig(format!(
                "field selector {s:?} (expected request-line or header:<name>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GafConfig {
    pub targets: Vec<FieldSelector>,
    /// Malicious words injected into each generated field.
    pub mal_words: usize,
    pub max_retries: usize,
    pub gan: GanConfig,
}

impl Default for GafConfig {
    fn default() -> Self {
        GafConfig {
            targets: vec![
                FieldSelector::RequestLine,
                FieldSelector::Header("user-agent".into()),
            ],
            mal_words: 1,
            max_retries: 10,
            gan: GanConfig::default(),
        }
    }
}

/// The first request and first response of a benign flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTemplate {
    pub flow_id: String,
    pub key: FlowKey,
    pub request: HttpMessage,
    pub response: HttpMessage,
}

fn strictly_sound(msg: &HttpMessage) -> bool {
    validate_message(msg).is_valid()
        && serialize_message(msg).is_ok_and(|bytes| {
            parse_http_message(&bytes, msg.direction, msg.ts_micros)
                .is_ok_and(|back| back.same_fields(msg) && serialize_message(&back).is_ok_and(|b| b == bytes))
        })
}

/// Templates from every flow with a request and a response that are both
/// strictly valid.
pub fn templates_from(benign: &[Flow]) -> Vec<FlowTemplate> {
    benign
        .iter()
        .filter_map(|f| {
            let req = f.messages.iter().find(|m| m.is_request())?;
            let resp = f.messages.iter().find(|m| !m.is_request())?;
            (strictly_sound(req) && strictly_sound(resp)).then(|| FlowTemplate {
                flow_id: f.flow_id.clone(),
                key: f.key,
                request: req.clone(),
                response: resp.clone(),
            })
        })
        .collect()
}

/// Where a selector lands in a template: the message, the field name and
/// the current content.
fn resolve(t: &FlowTemplate, sel: &FieldSelector) -> Option<(Direction, String, Vec<u8>)> {
    match sel {
        FieldSelector::RequestLine => {
            let (m, target) = (t.request.method.as_ref()?, t.request.target.as_ref()?);
            Some((Direction::Request, String::from_utf8_lossy(m).into_owned(), target.clone()))
        }
        FieldSelector::Header(name) => [&t.request, &t.response].into_iter().find_map(|msg| {
            msg.header(name)
                .map(|v| (msg.direction, name.clone(), v.to_vec()))
        }),
    }
}

fn splice(msg: &mut HttpMessage, sel: &FieldSelector, content: Vec<u8>) {
    match sel {
        FieldSelector::RequestLine => msg.target = Some(content),
        FieldSelector::Header(name) => {
            if let Some(h) = msg.headers.iter_mut().find(|h| h.is(name)) {
                h.value = content;
            }
        }
    }
    msg.refresh_raw();
}

/// Decodes the argmax of `G(z)` for noise seeded by `z_seed`, force-writes
/// the `mal_pos` words, and joins the words with `template`.
pub fn sample_and_decode(
    gan: &FieldGan,
    dict: &FieldDictionary,
    z_seed: u64,
    mal_pos: &[MalPos],
    template: &DelimiterTemplate,
) -> Result<Vec<u8>, GafError> {
    let mut rng = ChaCha8Rng::seed_from_u64(z_seed);
    let z = gan.noise(&mut rng);
    let seq = TokenSequence {
        field: gan.field.clone(),
        ids: gan.sample_ids(&z)?,
        template: template.clone(),
    };
    Ok(decode_field(&inject_malicious(&seq, mal_pos, dict)?, dict))
}

/// A dictionary with one trained GAN per generated field.
#[derive(Debug, Clone, PartialEq)]
pub struct GafGenerator {
    pub dict: FieldDictionary,
    pub gans: BTreeMap<String, FieldGan>,
    pub config: GafConfig,
}

impl GafGenerator {
    /// Trains a GAN for every field the selectors reach in `templates` that
    /// has malicious vocabulary. The training sequences are the benign
    /// contents of that field with malicious words injected.
    pub fn train(
        dict: FieldDictionary,
        templates: &[FlowTemplate],
        benign: &[Flow],
        config: GafConfig,
        seed: u64,
    ) -> Result<Self, GafError> {
        config.gan.validate()?;
        if templates.is_empty() {
            return Err(GafError::NoTemplates);
        }
        let mut fields: Vec<String> = templates
            .iter()
            .flat_map(|t| config.targets.iter().filter_map(|s| resolve(t, s)).map(|(_, f, _)| f))
            .filter(|f| dict.field(f).is_some_and(|v| !v.of_class(WordClass::Mal).is_empty()))
            .collect();
        fields.sort();
        fields.dedup();

        let mut contents: BTreeMap<&str, Vec<Vec<u8>>> = fields.iter().map(|f| (f.as_str(), Vec::new())).collect();
        for flow in benign {
            for msg in &flow.messages {
                for (name, content) in message_fields(msg) {
                    if let Some(v) = contents.get_mut(name.as_str()) {
                        v.push(content);
                    }
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(21);
        let len = config.gan.seq_len;
        let mut gans = BTreeMap::new();
        for (k, field) in fields.iter().enumerate() {
            let vocab = dict.field(field).expect("filtered above");
            let mut seqs = Vec::with_capacity(contents[field.as_str()].len());
            for c in &contents[field.as_str()] {
                let seq = encode_field(field, c, &dict, len);
                let words = seq.template.words();
                let mp = sample_mal_pos(&dict, field, words, len, config.mal_words, &mut rng);
                seqs.push(inject_malicious(&seq, &mp, &dict)?);
            }
            match train_field_gan(field, &seqs, vocab.size(), &config.gan, seed.wrapping_add(k as u64)) {
                Ok(gan) => {
                    info!("trained GAN for field {field} on {} sequences (V={})", seqs.len(), vocab.size());
                    gans.insert(field.clone(), gan);
                }
                Err(GafError::InsufficientData(why)) => warn!("skipping field {field}: {why}"),
                Err(e) => return Err(e),
            }
        }
        if gans.is_empty() {
            return Err(GafError::InsufficientData(
                "no targeted field has both malicious vocabulary and enough benign contents".into(),
            ));
        }
        Ok(GafGenerator { dict, gans, config })
    }

    fn usable_fields(&self, t: &FlowTemplate) -> Vec<(FieldSelector, Direction, String, Vec<u8>)> {
        self.config
            .targets
            .iter()
            .filter_map(|s| resolve(t, s).map(|(d, f, c)| (s.clone(), d, f, c)))
            .filter(|(_, _, f, _)| self.gans.contains_key(f))
            .collect()
    }

    fn attempt<R: Rng>(&self, t: &FlowTemplate, rng: &mut R) -> Result<Option<(HttpMessage, HttpMessage)>, GafError> {
        let (mut req, mut resp) = (t.request.clone(), t.response.clone());
        let len = self.config.gan.seq_len;
        let mut injected = Vec::new();
        for (sel, dir, field, content) in self.usable_fields(t) {
            let gan = &self.gans[&field];
            let (words, template) = tokenize_content(&content);
            let mp = sample_mal_pos(&self.dict, &field, words.len(), len, self.config.mal_words, rng);
            let generated = sample_and_decode(gan, &self.dict, rng.gen(), &mp, &template)?;
            injected.push((field, generated.clone()));
            let msg = if dir == Direction::Request { &mut req } else { &mut resp };
            splice(msg, &sel, generated);
        }
        resp.ts_micros = resp.ts_micros.max(req.ts_micros);
        let has_mal = injected.iter().any(|(field, content)| {
            tokenize_content(content)
                .0
                .iter()
                .any(|w| self.dict.is_malicious_word(field, w))
        });
        Ok((has_mal && strictly_sound(&req) && strictly_sound(&resp)).then_some((req, resp)))
    }

    /// Generates `n` malicious flows. Flow `i` depends only on `(seed, i)`
    /// and the trained state, so output is independent of thread count.
    pub fn generate(&self, n: usize, templates: &[FlowTemplate], seed: u64) -> Result<Vec<Flow>, GafError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let usable: Vec<&FlowTemplate> = templates.iter().filter(|t| !self.usable_fields(t).is_empty()).collect();
        if usable.is_empty() {
            return Err(GafError::NoTemplates);
        }
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                for _ in 0..=self.config.max_retries {
                    let t = usable[rng.gen_range(0..usable.len())];
                    if let Some((req, resp)) = self.attempt(t, &mut rng)? {
                        return Ok(Flow::new(format!("gaf-{seed}-{i}"), t.key, Label::Malicious, vec![req, resp])?);
                    }
                }
                Err(GafError::ValidationFailed {
                    index: i,
                    attempts: self.config.max_retries + 1,
                })
            })
            .collect()
    }

    /// Writes the dictionary and one checkpoint per GAN into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), GafError> {
        let io = |source| GafError::Io { path: dir.to_path_buf(), source };
        std::fs::create_dir_all(dir).map_err(io)?;
        self.dict.save(&dir.join("dictionary.txt"))?;
        let mut index = String::new();
        for (k, gan) in self.gans.values().enumerate() {
            let mut ckpt = gan.to_checkpoint();
            ckpt.metadata.insert("dictionary_hash".into(), self.dict.hash());
            save_checkpoint(&dir.join(format!("gan-{k}.ckpt")), &ckpt)?;
            index.push_str(&format!("gan-{k}.ckpt\n"));
        }
        let targets: Vec<String> = self.config.targets.iter().map(|t| t.to_string()).collect();
        let meta = format!(
            "targets={}\nmal_words={}\nmax_retries={}\n",
            targets.join(","),
            self.config.mal_words,
            self.config.max_retries
        );
        std::fs::write(dir.join("generator.txt"), meta + &index).map_err(io)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GafError> {
        let io = |source| GafError::Io { path: dir.to_path_buf(), source };
        let dict = FieldDictionary::load(&dir.join("dictionary.txt"))?;
        let text = std::fs::read_to_string(dir.join("generator.txt")).map_err(io)?;
        let mut config = GafConfig::default();
        let mut gans = BTreeMap::new();
        let bad = |what: &str| GafError::InvalidConfig(format!("generator.txt: {what}"));
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("targets=") {
                config.targets = v.split(',').map(str::parse).collect::<Result<_, _>>()?;
            } else if let Some(v) = line.strip_prefix("mal_words=") {
                config.mal_words = v.parse().map_err(|_| bad("mal_words"))?;
            } else if let Some(v) = line.strip_prefix("max_retries=") {
                config.max_retries = v.parse().map_err(|_| bad("max_retries"))?;
            } else if !line.is_empty() {
                let ckpt = load_checkpoint(&dir.join(line))?;
                if ckpt.metadata.get("dictionary_hash") != Some(&dict.hash()) {
                    return Err(bad("GAN trained with a different dictionary"));
                }
                let gan = FieldGan::from_checkpoint(&ckpt)?;
                config.gan = gan.config.clone();
                gans.insert(gan.field.clone(), gan);
            }
        }
        Ok(GafGenerator { dict, gans, config })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaf::{build_dictionary, PAD};
    use crate::nn::Tensor;
    use crate::synth::separable_flows;
    use std::collections::HashSet;

    fn quick_config() -> GafConfig {
        GafConfig {
            gan: GanConfig {
                iterations: 3,
                critic_steps: 1,
                channels: 4,
                hidden: 8,
                batch_size: 8,
                ..GanConfig::default()
            },
            ..GafConfig::default()
        }
    }

    fn setup() -> (GafGenerator, Vec<FlowTemplate>) {
        let flows = separable_flows(40, 5);
        let (mal, ben): (Vec<Flow>, Vec<Flow>) = flows.into_iter().partition(|f| f.label == Label::Malicious);
        let dict = build_dictionary(&mal, &ben, 5).unwrap();
        let templates = templates_from(&ben);
        let g = GafGenerator::train(dict, &templates, &ben, quick_config(), 1).unwrap();
        (g, templates)
    }

    #[test]
    fn selectors_parse() {
        assert_eq!("request-line".parse::<FieldSelector>().unwrap(), FieldSelector::RequestLine);
        assert_eq!(
            "header:User-Agent".parse::<FieldSelector>().unwrap(),
            FieldSelector::Header("user-agent".into())
        );
        assert!("header:bad name".parse::<FieldSelector>().is_err());
        assert!("body".parse::<FieldSelector>().is_err());
    }

    #[test]
    fn all_pad_output_leaves_only_the_forced_word() {
        let (g, _) = setup();
        let mut gan = g.gans["GET"].clone();
        let last = format!("g.conv{}", gan.config.conv_layers);
        let w = gan.generator.get_mut(&format!("{last}.w")).unwrap();
        *w = w.zeros_like();
        let mut bias = vec![0.0; gan.vocab_size];
        bias[PAD as usize] = 5.0;
        *gan.generator.get_mut(&format!("{last}.b")).unwrap() = Tensor::vector(bias);
        assert!(gan.sample_ids(&[0.0; 64]).unwrap().iter().all(|&id| id == PAD));
        let word = g.dict.field("GET").unwrap().of_class(WordClass::Mal)[0].0.to_vec();
        let mp = [MalPos { position: 0, word: word.clone() }];
        let empty = tokenize_content(b"").1;
        let out = sample_and_decode(&gan, &g.dict, 3, &mp, &empty).unwrap();
        assert_eq!(out, word);
        assert_eq!(out, sample_and_decode(&gan, &g.dict, 3, &mp, &empty).unwrap());
    }

    #[test]
    fn generated_flows_are_valid_malicious_and_varied() {
        let (g, templates) = setup();
        assert!(g.generate(0, &templates, 1).unwrap().is_empty());
        let flows = g.generate(100, &templates, 9).unwrap();
        assert_eq!(flows.len(), 100);
        let mut distinct = HashSet::new();
        for f in &flows {
            assert_eq!(f.label, Label::Malicious);
            assert_eq!(f.messages.len(), 2);
            let mut bytes = Vec::new();
            for m in &f.messages {
                assert!(validate_message(m).is_valid());
                let wire = serialize_message(m).unwrap();
                let back = parse_http_message(&wire, m.direction, m.ts_micros).unwrap();
                assert_eq!(serialize_message(&back).unwrap(), wire);
                bytes.extend(wire);
            }
            let has_mal = f.messages.iter().flat_map(message_fields).any(|(field, content)| {
                tokenize_content(&content).0.iter().any(|w| g.dict.is_malicious_word(&field, w))
            });
            assert!(has_mal, "{}", String::from_utf8_lossy(&bytes));
            distinct.insert(bytes);
        }
        assert!(distinct.len() >= 90, "{} distinct", distinct.len());
        assert_eq!(flows, g.generate(100, &templates, 9).unwrap());
    }

    #[test]
    fn no_templates() {
        let (g, _) = setup();
        assert!(matches!(g.generate(1, &[], 0), Err(GafError::NoTemplates)));
    }

    #[test]
    fn save_and_load() {
        let (g, templates) = setup();
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path()).unwrap();
        let back = GafGenerator::load(dir.path()).unwrap();
        assert_eq!(back.dict, g.dict);
        assert_eq!(back.gans.keys().collect::<Vec<_>>(), g.gans.keys().collect::<Vec<_>>());
        assert_eq!(back.generate(5, &templates, 2).unwrap(), g.generate(5, &templates, 2).unwrap());
    }
}
