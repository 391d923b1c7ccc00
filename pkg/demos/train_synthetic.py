import time

from sspg.corpus import make_synthetic
from sspg.training import Config, train, generate
from sspg.evaluation import corpus_chrf, copy_gold_f1

ds = make_synthetic(seed=0, n_train=300, n_eval=40)
print(ds.counts())
ex = ds.train[0]
print(ex.triple, "->", ex.references)

# small model so this finishes in a couple of minutes on one core
cfg = Config.defaults("sspg", emb=24, hidden=48, epochs=8, lr=2e-3, dropout=0.2, batch_size=8,
                      bpe_merges=150, lexicon_size=200, valid_limit=20, max_chars=120)
t = time.time()
result = train(cfg, ds, verbose=True)
print("trained in %.0fs, best epoch %d" % (time.time() - t, result.best_epoch))
model = result.model

refs = [e.references for e in ds.test]
for decoder, k in [("unmixed", 1), ("unmixed", 5), ("dynamic", 5)]:
    outs = generate(model, ds.test, decoder, k, cfg.max_chars)
    hyps = [o.text for o in outs]
    print("%-8s k=%d  chrF++ %.2f  copy F1 %.2f" % (decoder, k, corpus_chrf(hyps, refs, word_n=2),
                                                     copy_gold_f1(hyps, ds.test)))

# which component produced each subword
out = generate(model, ds.test[:3], "unmixed", 1, cfg.max_chars)
for e, o in zip(ds.test[:3], out):
    print(e.triple)
    print("  ", " ".join("[%s]%s" % (seg, comp) for seg, comp, _ in o.segments))
    print("  ", o.component_counts())
