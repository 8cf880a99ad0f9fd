"""The model zoo: one KNN, three GBDT variants, four neural tabular models.

Every entry exposes fit(X_train, y_train, X_val, y_val) and
predict(X) -> probability matrix (classification) or value vector
(regression). Neural models train with Adam for at most `epochs` epochs at
batch size `batch_size`, early-stopped on validation loss with the given
patience; regression labels are standardized for training and predictions
mapped back to label units.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.ensemble import (
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    HistGradientBoostingClassifier,
    HistGradientBoostingRegressor,
)
from sklearn.neighbors import KNeighborsClassifier, KNeighborsRegressor
from torch import nn


class SklearnModel:
    """Uniform wrapper over the sklearn members of the pool."""

    def __init__(self, estimator, classification: bool, n_classes: int | None):
        self.estimator = estimator
        self.classification = classification
        self.n_classes = n_classes

    def fit(self, X_train, y_train, X_val=None, y_val=None):
        self.estimator.fit(X_train, y_train)
        return self

    def predict(self, X) -> np.ndarray:
        if not self.classification:
            return np.asarray(self.estimator.predict(X), dtype=float)
        probs = self.estimator.predict_proba(X)
        # estimators only emit columns for classes seen in train
        out = np.zeros((len(X), self.n_classes))
        for j, c in enumerate(self.estimator.classes_):
            out[:, int(c)] = probs[:, j]
        return out


def _mlp_stack(width_in: int, width_out: int, hidden: int, depth: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    w = width_in
    for _ in range(depth):
        layers += [nn.Linear(w, hidden), nn.ReLU(), nn.Dropout(0.1)]
        w = hidden
    layers.append(nn.Linear(w, width_out))
    return nn.Sequential(*layers)


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.norm = nn.BatchNorm1d(width)
        self.lin1 = nn.Linear(width, width)
        self.lin2 = nn.Linear(width, width)
        self.drop = nn.Dropout(0.1)

    def forward(self, x):
        h = self.drop(torch.relu(self.lin1(self.norm(x))))
        return x + self.lin2(h)


class ResNetTab(nn.Module):
    def __init__(self, width_in: int, width_out: int, hidden: int = 64, blocks: int = 2):
        super().__init__()
        self.stem = nn.Linear(width_in, hidden)
        self.blocks = nn.Sequential(*[ResidualBlock(hidden) for _ in range(blocks)])
        self.head = nn.Linear(hidden, width_out)

    def forward(self, x):
        return self.head(torch.relu(self.blocks(self.stem(x))))


class FeatureTokenizer(nn.Module):
    """Per-column scalar tokens: token_j = x_j * w_j + b_j."""

    def __init__(self, n_features: int, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(n_features, dim) * 0.1)
        self.bias = nn.Parameter(torch.zeros(n_features, dim))

    def forward(self, x):
        return x.unsqueeze(-1) * self.weight + self.bias


class FTTransformerTab(nn.Module):
    def __init__(self, width_in: int, width_out: int, dim: int = 32, heads: int = 4, layers: int = 2):
        super().__init__()
        self.tokenizer = FeatureTokenizer(width_in, dim)
        self.cls = nn.Parameter(torch.zeros(1, 1, dim))
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=heads, dim_feedforward=2 * dim, dropout=0.1, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        self.head = nn.Linear(dim, width_out)

    def forward(self, x):
        tokens = self.tokenizer(x)
        cls = self.cls.expand(len(x), 1, -1)
        encoded = self.encoder(torch.cat([cls, tokens], dim=1))
        return self.head(encoded[:, 0])


class AutoIntTab(nn.Module):
    """Embedding tokens refined by stacked self-attention interaction layers."""

    def __init__(self, width_in: int, width_out: int, dim: int = 16, heads: int = 2, layers: int = 2):
        super().__init__()
        self.tokenizer = FeatureTokenizer(width_in, dim)
        self.attention = nn.ModuleList(
            [nn.MultiheadAttention(dim, heads, dropout=0.1, batch_first=True) for _ in range(layers)]
        )
        self.head = nn.Linear(width_in * dim, width_out)

    def forward(self, x):
        tokens = self.tokenizer(x)
        for attn in self.attention:
            refined, _ = attn(tokens, tokens, tokens)
            tokens = torch.relu(refined) + tokens
        return self.head(tokens.flatten(1))


class TorchModel:
    def __init__(self, build, classification: bool, n_classes: int | None,
                 epochs: int = 200, batch_size: int = 1024, patience: int = 20, seed: int = 0):
        self.build = build
        self.classification = classification
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.label_mean = 0.0
        self.label_std = 1.0

    def fit(self, X_train, y_train, X_val, y_val):
        torch.manual_seed(self.seed)
        width_out = self.n_classes if self.classification else 1
        self.net = self.build(X_train.shape[1], width_out)
        if self.classification:
            loss_fn = nn.CrossEntropyLoss()
            y_tr = torch.as_tensor(y_train, dtype=torch.long)
            y_va = torch.as_tensor(y_val, dtype=torch.long)
        else:
            # standardize regression labels for training
            self.label_mean = float(np.mean(y_train))
            self.label_std = max(float(np.std(y_train)), 1e-12)
            loss_fn = nn.MSELoss()
            y_tr = torch.as_tensor((y_train - self.label_mean) / self.label_std, dtype=torch.float32)
            y_va = torch.as_tensor((y_val - self.label_mean) / self.label_std, dtype=torch.float32)
        x_tr = torch.as_tensor(X_train, dtype=torch.float32)
        x_va = torch.as_tensor(X_val, dtype=torch.float32)
        optimizer = torch.optim.Adam(self.net.parameters(), lr=1e-3)

        best_val = float("inf")
        best_state = {k: v.clone() for k, v in self.net.state_dict().items()}
        stale = 0
        for _ in range(self.epochs):
            self.net.train()
            order = torch.randperm(len(x_tr))
            for start in range(0, len(x_tr), self.batch_size):
                batch = order[start : start + self.batch_size]
                optimizer.zero_grad()
                out = self.net(x_tr[batch])
                loss = loss_fn(out if self.classification else out.squeeze(-1), y_tr[batch])
                loss.backward()
                optimizer.step()
            self.net.eval()
            with torch.no_grad():
                out = self.net(x_va)
                val_loss = float(loss_fn(out if self.classification else out.squeeze(-1), y_va))
            if val_loss < best_val - 1e-6:
                best_val = val_loss
                best_state = {k: v.clone() for k, v in self.net.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        self.net.load_state_dict(best_state)
        return self

    def predict(self, X) -> np.ndarray:
        self.net.eval()
        with torch.no_grad():
            out = self.net(torch.as_tensor(X, dtype=torch.float32))
            if self.classification:
                return torch.softmax(out, dim=1).double().numpy()
            return out.squeeze(-1).double().numpy() * self.label_std + self.label_mean


def build_model(kind: str, classification: bool, n_classes: int | None,
                seed: int, epochs: int, batch_size: int, patience: int, params: dict | None = None):
    """Instantiate one pool member by kind name."""
    params = dict(params or {})
    if kind == "knn":
        k = params.pop("n_neighbors", 10)
        est = KNeighborsClassifier(k, **params) if classification else KNeighborsRegressor(k, **params)
        return SklearnModel(est, classification, n_classes)
    if kind == "gbdt":
        cls = GradientBoostingClassifier if classification else GradientBoostingRegressor
        return SklearnModel(cls(random_state=seed, **params), classification, n_classes)
    if kind == "sgb":
        # stochastic gradient boosting: row subsampling per round
        params.setdefault("subsample", 0.7)
        cls = GradientBoostingClassifier if classification else GradientBoostingRegressor
        return SklearnModel(cls(random_state=seed, **params), classification, n_classes)
    if kind == "hist_gbdt":
        cls = HistGradientBoostingClassifier if classification else HistGradientBoostingRegressor
        return SklearnModel(cls(random_state=seed, **params), classification, n_classes)
    builders = {
        "mlp": lambda w_in, w_out: _mlp_stack(w_in, w_out, params.get("hidden", 128), params.get("depth", 2)),
        "resnet": lambda w_in, w_out: ResNetTab(w_in, w_out, params.get("hidden", 64), params.get("blocks", 2)),
        "ft_transformer": lambda w_in, w_out: FTTransformerTab(w_in, w_out),
        "autoint": lambda w_in, w_out: AutoIntTab(w_in, w_out),
    }
    if kind not in builders:
        raise ValueError(f"unknown model kind {kind!r}")
    return TorchModel(
        builders[kind], classification, n_classes,
        epochs=epochs, batch_size=batch_size, patience=patience, seed=seed,
    )
