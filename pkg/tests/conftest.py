import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gireid import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def toy_manifest():
    spec = SyntheticSpec(
        num_identities=8, images_per_identity_per_modality=8, image_size=(32, 16), seed=7
    )
    return generate_synthetic(spec)


def random_two_modality_batch(rng, num_ids, images_per_id, dim, scale=1.0):
    """Random embeddings + labels for both modalities, identity-balanced."""
    labels = np.repeat(np.arange(num_ids), images_per_id)
    gray = rng.normal(0, scale, size=(len(labels), dim))
    ir = rng.normal(0, scale, size=(len(labels), dim))
    return gray, ir, labels
