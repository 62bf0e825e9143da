# %% [markdown]
# # The hybrid CNN on PR matrices
#
# A 2-D convolutional branch and a flattened dense branch are concatenated
# and fed to a small dense head.  Everything runs in float64 numpy so the
# backward pass can be verified by finite differences.

# %%
import numpy as np

from roitopo.learn import TrainConfig, evaluate, forward, gradient_check, init_model, knn_baseline, train

rng = np.random.default_rng(0)


def toy(label, n=10):
    a = rng.random((n, n)) * 0.3
    v = a + a.T
    if label == "B":
        v[: n // 2, n // 2:] += 1
        v[n // 2:, : n // 2] += 1
    np.fill_diagonal(v, 0)
    return v


data = [(toy(lab), lab) for lab in ["A", "B"] * 10]

# %%
model = init_model(10, ["A", "B"], seed=1)
print(model.num_parameters(), "parameters")
print(forward(model, data[0][0]))

# %% [markdown]
# Analytic gradients against central differences.

# %%
print(gradient_check(model, data[0], n_params=200))

# %%
model, metrics = train(data, TrainConfig(epochs=15, seed=0))
print([round(l, 3) for l in metrics["loss"]])
print("held-out accuracy:", metrics["test_accuracy"])

# %% [markdown]
# The nearest-neighbour baseline uses the Frobenius distance between
# matrices.

# %%
train_set = [data[i] for i in metrics["train_index"]]
hits = [knn_baseline(train_set, data[i][0], k=3) == data[i][1] for i in metrics["test_index"]]
print("3-NN accuracy:", np.mean(hits))
print(evaluate(model, [data[i] for i in metrics["test_index"]])["confusion"])
