#include <doctest.h>

#include <cstring>

#include "helpers.hpp"
#include "smforge/io.hpp"

using namespace smforge;
using namespace smforge::io;

namespace {

SystemMatrix float_exact_sm(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SystemMatrix sm = testutil::random_sm(3, 4, 2, rng);
    CMatrix d = sm.data();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        d.data()[i] = {static_cast<float>(d.data()[i].real()), static_cast<float>(d.data()[i].imag())};
    }
    return SystemMatrix(sm.grid(), sm.freqs(), d);
}

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / (std::string("smforge_test_") + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("crc32 reference value") {
    CHECK(crc32("123456789") == 0xCBF43926u);
    CHECK(crc32("") == 0u);
}

TEST_CASE("system matrix round trip") {
    const SystemMatrix sm = float_exact_sm(1);
    const std::string bytes = encode_sm(sm);
    const SystemMatrix back = decode_sm(bytes);
    CHECK(back.data() == sm.data());
    CHECK(back.grid() == sm.grid());
    CHECK(back.freqs() == sm.freqs());
    CHECK(encode_sm(back) == bytes);

    const SystemMatrix noisy(sm.grid(), sm.freqs(), sm.data(), std::vector<double>{10.0, 20.0, 30.0});
    REQUIRE(decode_sm(encode_sm(noisy)).row_snr());
    CHECK(*decode_sm(encode_sm(noisy)).row_snr() == std::vector<double>{10.0, 20.0, 30.0});

    const fs::path dir = temp_dir("io");
    save_sm(dir / "a.bin", sm);
    CHECK(load_sm(dir / "a.bin").data() == sm.data());
    CHECK_FALSE(fs::exists(dir / "a.bin.tmp"));
    CHECK(sm_payload_crc(dir / "a.bin") == sm_payload_crc(dir / "a.bin"));
    save_sm(dir / "b.bin", float_exact_sm(2));
    CHECK(sm_payload_crc(dir / "a.bin") != sm_payload_crc(dir / "b.bin"));
    fs::remove_all(dir);
}

TEST_CASE("golden single-entry payload") {
    const SystemMatrix one(Grid(1, 1, 1, 1), testutil::dummy_freqs(1), CMatrix::Constant(1, 1, cplx(1.0, 2.0)));
    const std::string bytes = encode_sm(one);
    CHECK(bytes.substr(0, 8) == std::string("SMFORGE\0", 8));
    const unsigned char tail[8] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40};
    REQUIRE(bytes.size() > 8);
    CHECK(std::memcmp(bytes.data() + bytes.size() - 8, tail, 8) == 0);
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    CHECK(version == kFormatVersion);
}

TEST_CASE("corrupt containers are rejected") {
    const std::string bytes = encode_sm(float_exact_sm(3));
    CHECK_THROWS_AS((void)decode_sm(bytes.substr(0, bytes.size() - 4)), FormatError);
    CHECK_THROWS_AS((void)decode_sm(bytes + "xxxx"), FormatError);
    CHECK_THROWS_AS((void)decode_sm(bytes.substr(0, 6)), FormatError);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS((void)decode_sm(bad_magic), FormatError);

    std::string bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_AS((void)decode_sm(bad_version), FormatError);

    std::string flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x10;
    CHECK_THROWS_AS((void)decode_sm(flipped), FormatError);

    CHECK_THROWS_AS((void)load_sm("/nonexistent/sm.bin"), Error);
}

TEST_CASE("checkpoint round trip") {
    model::ModelConfig m;
    m.channels = 4;
    m.blocks = 1;
    m.window = 2;
    m.scale = 2;
    Checkpoint ck;
    ck.model = m;
    ck.train = train::TrainConfig{}.to_json();
    ck.iteration = 42;
    ck.seed = 9;
    ck.training_inputs = {1u, 0xDEADBEEFu};
    ck.params = model::ModelParams::initialize(m);
    for (auto& [name, t] : ck.params.tensors) t = t.cast<float>().cast<double>();

    const std::string bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.iteration == 42);
    CHECK(back.seed == 9);
    CHECK(back.training_inputs == ck.training_inputs);
    CHECK(back.model.to_json() == m.to_json());
    CHECK(back.train == ck.train);
    CHECK(back.params.fingerprint() == ck.params.fingerprint());
    CHECK(encode_checkpoint(back) == bytes);
    CHECK_THROWS_AS((void)decode_checkpoint(encode_sm(float_exact_sm(4))), FormatError);
    CHECK_THROWS_AS((void)decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST_CASE("image exports") {
    RMatrix img(2, 3);
    img << 0.0, -1.0, 0.5, 2.0, 1.0, -2.0;
    const std::string pgm = encode_pgm(img);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(pgm.size() == header.size() + 6);
    CHECK(pgm.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(pgm[header.size() + 3]) == 255);
    CHECK(static_cast<unsigned char>(pgm[header.size()]) == 0);
    CHECK(encode_pgm(RMatrix::Zero(1, 2)) == std::string("P5\n2 1\n255\n\0\0", 13));

    const std::string csv = encode_csv(img);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.rfind("0,-1,0.5\n", 0) == 0);

    train::TrainReport r;
    r.train_loss = {0.5, 0.25};
    r.val_iterations = {2};
    r.val_nrmse = {0.125};
    const std::string curve = loss_curve_csv(r);
    CHECK(curve.find("iteration,train_loss,val_nrmse") == 0);
    CHECK(curve.find("2,0.25,0.125") != std::string::npos);
}

TEST_CASE("configuration overrides") {
    nlohmann::json root = {{"train", {{"iterations", 10}, {"loss_name", "fsc"}}}, {"seed", 1}};
    apply_override(root, "train.iterations=25");
    CHECK(root["train"]["iterations"] == 25);
    apply_override(root, "train.loss_name=l1");
    CHECK(root["train"]["loss_name"] == "l1");
    apply_override(root, "seed=7");
    CHECK(root["seed"] == 7);
    CHECK_THROWS_AS(apply_override(root, "train.nope=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(root, "no_equals_sign"), ConfigError);
}
