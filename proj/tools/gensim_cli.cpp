#include <malloc.h>

#include "gensim/cli.hpp"

int main(int argc, char** argv) {
    // Training allocates large short-lived batch matrices; keeping them off
    // mmap avoids page-fault churn on every minibatch.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return gensim::run_cli(argc, argv);
}
