#include "wsr/datasynth.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wsr/image_io.hpp"

namespace wsr::synth {
namespace fs = std::filesystem;

std::string make_dataset(const std::string& dir, std::int64_t count, std::int64_t h, std::int64_t w,
                         const DegradeSpec& spec) {
    spec.validate();
    if (count < 1) throw ConfigError("make_dataset: count must be >= 1");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());

    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("cannot open manifest for writing: " + manifest_path);
    manifest << "# index,clean,degraded,kind,density,angle,particle_radius,intensity,seed\n";

    for (std::int64_t i = 0; i < count; ++i) {
        std::ostringstream tag;
        tag << std::setw(4) << std::setfill('0') << i;
        const std::string clean_name = "clean_" + tag.str() + ".png";
        const std::string degraded_name = "degraded_" + tag.str() + ".png";

        Tensor<float> clean = generate_clean<float>(mix_seed(spec.seed, std::uint64_t(2 * i)), h, w);
        DegradeSpec per = spec;
        per.seed = mix_seed(spec.seed, std::uint64_t(2 * i + 1));
        Tensor<float> degraded = degrade(clean, per);

        write_png((fs::path(dir) / clean_name).string(), clean);
        write_png((fs::path(dir) / degraded_name).string(), degraded);

        manifest << i << ',' << clean_name << ',' << degraded_name << ',' << per.kind << ','
                 << per.density << ',' << per.angle << ',' << per.particle_radius << ','
                 << per.intensity << ',' << per.seed << '\n';
    }
    if (!manifest) throw IoError("write failure on manifest: " + manifest_path);
    return manifest_path;
}

std::vector<DatasetPair> load_dataset(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    std::vector<DatasetPair> pairs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string idx, clean_rel, degraded_rel;
        if (!std::getline(is, idx, ',') || !std::getline(is, clean_rel, ',') ||
            !std::getline(is, degraded_rel, ','))
            throw IoError("malformed manifest line: " + line);
        DatasetPair p;
        try {
            p.index = std::stoll(idx);
        } catch (const std::exception&) {
            throw IoError("malformed manifest index: " + line);
        }
        p.clean_path = (base / clean_rel).string();
        p.degraded_path = (base / degraded_rel).string();
        p.clean = read_png(p.clean_path);
        p.degraded = read_png(p.degraded_path);
        if (!p.clean.same_shape(p.degraded))
            throw IoError("clean/degraded size mismatch for pair " + idx);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw IoError("manifest lists no pairs: " + manifest_path);
    return pairs;
}

}  // namespace wsr::synth
