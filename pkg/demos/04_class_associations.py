"""Which words does a trained model tie to each class?

For every class, the three hidden units with the largest classifier weight
are picked and words are ranked by their average input weight into those
units.

Run: python demos/04_class_associations.py
"""
from collections import Counter

from nadetopic import TrainConfig, gen_synthetic, inspect_class_associations, train

vocab, docs = gen_synthetic(C=3, K=12, M=2, A=6, docs_per_class=60, D=40, L=3,
                            concentration=0.05, seed=3)
params, _ = train(vocab, docs, TrainConfig(lam=0.1, lr=0.01, epochs=40, hidden=12, seed=0))

for cls in range(vocab.C):
    res = inspect_class_associations(params, cls, top_topics=3, top_words=5)
    frequent = Counter(j for d in docs if d.label == cls for j in vocab.joint_sequence(d))
    print(f"class {cls}: topics {res.topics}")
    print("   top words by weight:   ", res.decoded)
    print("   most frequent in class:", [vocab.decode(j) for j, _ in frequent.most_common(5)])
