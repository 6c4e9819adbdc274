use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingError, EmbeddingTable, SkipGramConfig, TokenCorpus};
use crate::linalg::{axpy, dot, sigmoid, softplus, Matrix};

const MIN_LR_FACTOR: f64 = 1e-4;

/// Negative-sampling loss of one (center, context, negatives) triple:
/// `-log σ(u_o·v_c) - Σ log σ(-u_k·v_c)`.
pub fn sgns_objective(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    // -log σ(x) = softplus(-x)
    let mut j = softplus(-dot(context, center));
    for u in negatives {
        j += softplus(dot(u, center));
    }
    j
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGradients {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`sgns_objective`] with respect to every argument.
pub fn sgns_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let mut g_center = vec![0.0; center.len()];
    let pos = sigmoid(dot(context, center)) - 1.0;
    axpy(pos, context, &mut g_center);
    let g_context = center.iter().map(|v| pos * v).collect();
    let g_negatives = negatives
        .iter()
        .map(|u| {
            let s = sigmoid(dot(u, center));
            axpy(s, u, &mut g_center);
            center.iter().map(|v| s * v).collect()
        })
        .collect();
    SgnsGradients {
        center: g_center,
        context: g_context,
        negatives: g_negatives,
    }
}

/// Skip-gram with negative sampling over the corpus sentences. Tokens
/// outside the vocabulary are dropped before windows are formed.
pub fn train_skipgram(
    corpus: &TokenCorpus,
    config: &SkipGramConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    let v = corpus.vocab.len();
    let d = config.dim;
    if v == 0 {
        return Err(EmbeddingError::EmptyCorpus);
    }
    if d == 0 {
        return Err(EmbeddingError::DegenerateCorpus(
            "embedding dimension is 0".into(),
        ));
    }
    let sentences = corpus.indexed_sentences();
    if config.window == 0 || !sentences.iter().any(|s| s.len() >= 2) {
        return Err(EmbeddingError::DegenerateCorpus(
            "no sentence has two in-vocabulary tokens within the window".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Uniform::new_inclusive(-0.5 / d as f64, 0.5 / d as f64);
    let mut input = Matrix::from_vec(v, d, (0..v * d).map(|_| init.sample(&mut rng)).collect());
    let mut output = Matrix::zeros(v, d);
    let noise = WeightedIndex::new((0..v).map(|i| (corpus.vocab.freq(i) as f64).powf(0.75)))
        .map_err(|e| EmbeddingError::DegenerateCorpus(e.to_string()))?;

    let total = (config.epochs * sentences.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut processed = 0usize;
    let mut targets: Vec<(usize, f64)> = Vec::with_capacity(config.negatives + 1);
    let mut grad_center = vec![0.0; d];
    let mut center_vec = vec![0.0; d];
    for _ in 0..config.epochs {
        for sentence in &sentences {
            for (i, &c) in sentence.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - processed as f64 / total).max(MIN_LR_FACTOR);
                processed += 1;
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(sentence.len() - 1);
                for (j, &o) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    targets.clear();
                    targets.push((o, 1.0));
                    for _ in 0..config.negatives {
                        let k = noise.sample(&mut rng);
                        if k != o && k != c {
                            targets.push((k, 0.0));
                        }
                    }
                    center_vec.copy_from_slice(input.row(c));
                    // every coefficient uses the parameters from before the step
                    for t in targets.iter_mut() {
                        t.1 = sigmoid(dot(output.row(t.0), &center_vec)) - t.1;
                    }
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    for &(t, coef) in &targets {
                        axpy(coef, output.row(t), &mut grad_center);
                    }
                    for &(t, coef) in &targets {
                        axpy(-lr * coef, &center_vec, output.row_mut(t));
                    }
                    axpy(-lr, &grad_center, input.row_mut(c));
                }
            }
        }
    }

    let mut unk_vector = vec![0.0; d];
    for r in 0..v {
        axpy(1.0 / v as f64, input.row(r), &mut unk_vector);
    }
    Ok(EmbeddingTable {
        vocab: corpus.vocab.clone(),
        vectors: input,
        unk_vector,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TokenCorpus;
    use rand::Rng;

    fn sentences(spec: &[(&str, usize)]) -> Vec<Vec<String>> {
        spec.iter()
            .flat_map(|(s, n)| std::iter::repeat_n(s.split(' ').map(String::from).collect(), *n))
            .collect()
    }

    fn small_config(seed: u64) -> SkipGramConfig {
        SkipGramConfig {
            dim: 8,
            window: 1,
            negatives: 3,
            epochs: 20,
            min_count: 1,
            learning_rate: 0.05,
            seed,
        }
    }

    #[test]
    fn cooccurring_tokens_end_up_closer() {
        let corpus =
            TokenCorpus::from_sentences(sentences(&[("a b", 200), ("c d", 1)]), 1).unwrap();
        for seed in 0..10 {
            let t = train_skipgram(&corpus, &small_config(seed)).unwrap();
            assert!(t.cosine("a", "b") > t.cosine("a", "c"), "seed {seed}");
        }
    }

    #[test]
    fn shape_and_finiteness() {
        let corpus = TokenCorpus::from_sentences(sentences(&[("x y", 3)]), 1).unwrap();
        let cfg = SkipGramConfig {
            dim: 4,
            ..small_config(1)
        };
        let t = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(t.vectors.shape(), (2, 4));
        assert!(t.vectors.is_finite());
        assert_eq!(t.unk_vector.len(), 4);
        let mean: Vec<f64> = (0..4)
            .map(|k| (t.vectors.row(0)[k] + t.vectors.row(1)[k]) / 2.0)
            .collect();
        for (u, m) in t.unk_vector.iter().zip(&mean) {
            assert!((u - m).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_table() {
        let corpus =
            TokenCorpus::from_sentences(sentences(&[("a b c a", 5), ("c d", 2)]), 1).unwrap();
        let a = train_skipgram(&corpus, &small_config(9)).unwrap();
        let b = train_skipgram(&corpus, &small_config(9)).unwrap();
        assert_eq!(a.vectors.as_slice(), b.vectors.as_slice());
        let c = train_skipgram(&corpus, &small_config(10)).unwrap();
        assert_ne!(a.vectors.as_slice(), c.vectors.as_slice());
    }

    #[test]
    fn no_pairs_is_degenerate() {
        let corpus = TokenCorpus::from_sentences(sentences(&[("a", 3), ("b", 2)]), 1).unwrap();
        assert!(matches!(
            train_skipgram(&corpus, &small_config(0)),
            Err(EmbeddingError::DegenerateCorpus(_))
        ));
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 6;
        let mut vecs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let eval = |vs: &Vec<Vec<f64>>| {
            let negs: Vec<&[f64]> = vs[2..].iter().map(Vec::as_slice).collect();
            sgns_objective(&vs[0], &vs[1], &negs)
        };
        let negs: Vec<&[f64]> = vecs[2..].iter().map(Vec::as_slice).collect();
        let g = sgns_gradients(&vecs[0], &vecs[1], &negs);
        let analytic: Vec<Vec<f64>> = std::iter::once(g.center.clone())
            .chain(std::iter::once(g.context.clone()))
            .chain(g.negatives.iter().cloned())
            .collect();
        let h = 1e-5;
        for a in 0..vecs.len() {
            for k in 0..d {
                let orig = vecs[a][k];
                vecs[a][k] = orig + h;
                let plus = eval(&vecs);
                vecs[a][k] = orig - h;
                let minus = eval(&vecs);
                vecs[a][k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                assert!(rel_err(analytic[a][k], numeric) < 1e-5, "arg {a} coord {k}");
            }
        }
    }
}
