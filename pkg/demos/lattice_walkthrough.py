import numpy as np

from sspg import Seq2Seq, ModelConfig, Triple
from sspg.tokenization import bpe_train, build_char_vocab, build_lexicon, flatten_triple, render_tokens
from sspg.segmental import log_marginal, brute_force_marginal, segmentations, viterbi_segment

# a triple becomes one flat token sequence with span delimiters
triple = Triple("France", "currency", "Euro")
bpe = bpe_train(["France", "Euro", "currency", "Franc", "Fra", "nce"], 15)
print(render_tokens(flatten_triple(triple, bpe), bpe))

# tiny untrained model; shapes only matter for the demo
texts = ["I-Euro yimali yaseFrance.", "Imali yaseFrance yi-Euro."]
chars = build_char_vocab(texts)
lexicon = build_lexicon(texts, 40, 4, chars)
model = Seq2Seq(ModelConfig(kind="sspg", emb=8, hidden=8, max_seg_len=4, dropout=0.0), bpe, chars, lexicon, seed=1)
src = model.source_ids(triple)

y = "yi-Euro"
print(len(list(segmentations(y, 4))), "segmentations of", repr(y))

# the lattice DP and brute-force enumeration agree
print("dp     ", log_marginal(model, src, y))
print("brute  ", brute_force_marginal(model, src, y))

print("viterbi", "|".join(viterbi_segment(model, src, y)))

# spaces are always their own segment
for segs in list(segmentations("yi Euro", 4))[:5]:
    print(segs)

# mixture at the first step: char model vs lexicon, and generate vs copy
enc = model.encode(src)
mix = model.mixture(model.init_state(enc), enc)
print("p(char model) = %.3f   p(copy | lexicon) = %.3f" % (mix.g, mix.z1))
print("copyable strings:", sorted(mix.log_copy))
print("copy mass sums to", round(float(np.exp(list(mix.log_copy.values())).sum()), 12))
