// Trains the built-in MLP toy, then runs one gradual sweep and writes a
// checkpoint per target sparsity to the current directory.

#include "ovit/ovit.hpp"

#include <cstdio>
#include <iostream>

int main() {
    using namespace ovit;
    ToySpec toy;
    toy.seed = 3;
    auto model = toy_train(toy, 1000, suggested_lr(toy)).model;

    auto spec = PrunerSpec::for_method(Method::ovit);
    spec.fisher.block_size = 16;
    spec.recomputations = 2;
    const auto plan = plan_sweep({0.5, 0.6, 0.75, 0.8, 0.9}, 20);
    const auto report = run_gradual(model, spec, plan, LrSchedule{0.05, 0.001, 20});

    write_report(report, std::cout);
    for (const auto& cp : report.checkpoints) {
        char name[64];
        std::snprintf(name, sizeof name, "sweep.%g.ovpt", cp.sparsity);
        write_container(name, cp.container);
        std::cout << "wrote " << name << '\n';
    }
    return 0;
}
