"""From local descriptors to (visual word, region) tokens.

Descriptors would normally come from dense SIFT; here they are Gaussian
blobs scattered over a 256x256 image so that the pipeline can run anywhere.

Run: python demos/03_visual_vocabulary.py
"""
import numpy as np

from nadetopic.corpus import JointVocab, joint_index
from nadetopic.quantizer import DescriptorSet, assign_region, descriptors_to_tokens, kmeans_fit

rng = np.random.default_rng(0)
centers = rng.normal(scale=5.0, size=(8, 16))
n = 2000
data = centers[rng.integers(8, size=n)] + rng.normal(size=(n, 16))

book = kmeans_fit(data, K=8, seed=0, max_iters=50)
print("objective per iteration:", [round(v, 1) for v in book.history])

# %% Regions on a 2x2 grid, numbered row by row
for xy in [(0, 0), (200, 10), (10, 200), (255, 255), (128, 0)]:
    print(f"pixel {xy} -> region {assign_region(*xy, 256, 256, 2, 2)}")

# %% Tokens for one image, then their joint indices
image = DescriptorSet(data=data[:12], x=rng.integers(0, 256, 12).astype(float),
                      y=rng.integers(0, 256, 12).astype(float),
                      width=np.full(12, 256.0), height=np.full(12, 256.0))
tokens = descriptors_to_tokens(book, image)
vocab = JointVocab(K=8, M=4, A=0, C=2)
print("tokens:", tokens)
print("joint indices:", [joint_index(w, r, vocab) for w, r in tokens])
