"""Monte-Carlo checks of the reconstruction bounds on synthetic latent graphs.

The generative story: latent features F are drawn from a prior, observations
X = F + noise, and a predictor sees a corrupted copy of X. The toolkit's
claims relate the predictor's distance to the latent features (which a real
method can never measure) to quantities it can measure. This demo estimates
each side by Monte Carlo:

  theorem1    output-level bound for any predictor
  corollary1  the same control at the embedding level, paying a Lipschitz
              factor ell for the decoder
  corollary2  readout level, paying an extra pooling factor k

plus two sanity poles: a constant predictor makes the output-level bound an
exact equality, and a predictor blind to the masked rows has zero expected
inner product between its error and the observation noise. Run with:

    python3 demos/03_bound_laboratory.py
"""

import numpy as np

from latentgraph.bounds import (
    SyntheticSetup,
    check_dae_inner_product,
    constant_predictor,
    estimate_corollary,
    estimate_theorem1,
    make_random_predictor,
)


def show(label, est):
    print(f"  {label:<28} lhs {est.lhs_mean:8.4f}  rhs {est.rhs_mean:8.4f}  "
          f"slack {est.slack:8.4f} (+/- {est.slack_se:.4f})")


def main():
    rng = np.random.default_rng(11)
    setup = SyntheticSetup(num_nodes=16, feature_dim=4, edge_prob=0.4,
                           noise_sd=0.1, mask_ratio=0.25, mask_noise_sd=0.5)
    predictor = make_random_predictor(setup.feature_dim, hidden_dim=8,
                                      encoder_layers=2, decoder_layers=2,
                                      kind="gin", rng=rng)

    print("random GNN predictor, 2048 samples x 8 mask draws:")
    est = estimate_theorem1(predictor.predict, setup, n_mc=2048,
                            mask_draws=8, rng=rng)
    show("theorem1 (output)", est)
    for level, name in (("node", "corollary1 (embedding)"),
                        ("graph", "corollary2 (readout)")):
        show(name, estimate_corollary(level, predictor, setup, n_mc=2048,
                                      mask_draws=8, rng=rng))
    print("  slack >= 0 within noise means the bound holds.\n")

    print("constant predictor: the bound collapses to an equality")
    target = np.zeros((setup.num_nodes, setup.feature_dim))
    const_est = estimate_theorem1(constant_predictor(target), setup, n_mc=4096,
                           mask_draws=8, rng=np.random.default_rng(1))
    show("theorem1, constant", const_est)
    print(f"  penalty term is exactly {const_est.penalty} and |slack| <= 3 SE: "
          f"{abs(const_est.slack) <= 3 * const_est.slack_se}\n")

    print("blind prediction: error is uncorrelated with held-out noise")
    blind_setup = SyntheticSetup(num_nodes=16, feature_dim=4, edge_prob=0.4,
                                 noise_sd=0.3, mask_ratio=0.25,
                                 mask_noise_sd=0.5, mask_mode="zeros")
    ip = check_dae_inner_product(predictor.predict, blind_setup, n_mc=4096,
                                 mask_draws=8, rng=np.random.default_rng(2))
    print(f"  inner product {ip.mean:.5f} +/- {ip.se:.5f} "
          f"(within 3 SE of zero: {abs(ip.mean) <= 3 * ip.se})")


if __name__ == "__main__":
    main()
