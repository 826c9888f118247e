#include <CLI11.hpp>

#include "aero/cli.hpp"

int main(int argc, char **argv)
{
    CLI::App app{"aerobatch: diffusion-based aerobatic trajectory pipeline"};
    app.require_subcommand(1);

    static const struct
    {
        const char *name;
        const char *help;
    } cmds[] = {
        {"dataset", "build the maneuver primitive dataset"},
        {"train", "train the denoiser on a dataset"},
        {"scene", "create a scenario and its signed distance field"},
        {"generate", "sample a primitive chain with a trained model"},
        {"postprocess", "smooth a chain into a feasible trajectory"},
        {"ablate", "sweep guidance variants over seeds and chain lengths"},
        {"plot", "render an artifact as SVG"},
    };

    aero::CliOptions opt;
    for (const auto &c : cmds)
    {
        CLI::App *sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", opt.config_path, "JSON run configuration")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "override the config seed");
        sub->add_option("--out", opt.out_dir, "output directory");
    }

    CLI11_PARSE(app, argc, argv);
    opt.command = app.get_subcommands().front()->get_name();
    return aero::runCommand(opt);
}
