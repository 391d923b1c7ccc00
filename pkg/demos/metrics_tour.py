from sspg import Triple
from sspg.corpus import Example
from sspg.evaluation import chrf, bleu, gold_copy_decision, entity_prf

ref = "Ikomkhulu loMzantsi Afrika liKapa."
hyp = "I-Cape Town likomkhulu laseSouth Africa."

print("chrF   %.2f" % chrf(hyp, [ref]))
print("chrF++ %.2f" % chrf(hyp, [ref], word_n=2))
print("BLEU   %.2f" % bleu([hyp], [[ref]]))
print("self   %.2f" % chrf(ref, [ref]))

# copy or translate? decided by whether the entity string shows up in a reference
triple = Triple("South Africa", "capital", "Cape Town")
subj, obj = gold_copy_decision(triple, [ref])
print(subj.decision, obj.decision)

triple2 = Triple("Christian Panucci", "club", "Inter Milan")
print([d.decision for d in gold_copy_decision(triple2, ["UChristian Panucci udlalela i-Inter Milan."])])

# over-copying an entity that should be translated is an error
ex = Example(triple, [ref], "test", translations={"South Africa": "Mzantsi Afrika", "Cape Town": "Kapa"})
for gen in [hyp, ref]:
    res = entity_prf([gen], [ex])
    print(gen)
    print("   subject", res["subject"], " object", res["object"])
