"""Mass of the delta-tube around the triple diagonal for several covariances."""

from canonstat import covariance as cv


def main():
    models = [cv.wiener(), cv.brownian_bridge(), cv.stationary_ou(1.0)]
    deltas = [1 / 2**k for k in range(3, 8)]
    print("model," + ",".join(f"delta=1/{round(1 / d)}" for d in deltas))
    for m in models:
        masses = [cv.diagonal_tube_mass(m, 3, d) for d in deltas]
        print(m.name + "," + ",".join(f"{x:.5f}" for x in masses))


if __name__ == "__main__":
    main()
