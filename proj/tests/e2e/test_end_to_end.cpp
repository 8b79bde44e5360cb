#include <cstdio>

#include "doctest.h"
#include "crisp/data.hpp"
#include "crisp/metrics.hpp"
#include "crisp/model.hpp"
#include "crisp/training.hpp"

using namespace crisp;

namespace {

double pixel_agreement(const Mask& a, const Mask& b) {
    std::size_t same = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) same += a.label(p) == b.label(p);
    return static_cast<double>(same) / static_cast<double>(a.pixel_count());
}

} // namespace

// Trained to convergence with a long patience, unlike the default run.
TEST_CASE("converged model decodes masks and segments clean images") {
    const Dataset data = generate_dataset(200, 32, 32, 3, 7);
    ModelConfig mc;
    mc.init_seed = 1;
    TrainConfig tc;
    tc.seed = 3;
    tc.max_epochs = 400;
    tc.patience = 40;
    const auto [train_set, val_set] = split_train_val(data, tc);
    const TrainResult r = train(train_set, val_set, mc, tc);

    GeneratorOptions clean;
    clean.noise_sigma = 0.0;
    Rng unused(0);
    double agreement = 0.0;
    double dice = 0.0;
    for (const auto& s : train_set.samples) {
        agreement += pixel_agreement(decode(r.model, encode_mask(r.model, s.mask)).argmax(), s.mask);
        dice += dice_score(segment(r.model, render_image(s.mask, clean, unused)).argmax(), s.mask);
    }
    agreement /= static_cast<double>(train_set.size());
    dice /= static_cast<double>(train_set.size());
    std::printf("selected epoch %zu: decode agreement %.4f, clean segment dice %.4f\n",
                r.history.selected_epoch, agreement, dice);
    CHECK(agreement >= 0.95);
    CHECK(dice >= 0.85);
}
