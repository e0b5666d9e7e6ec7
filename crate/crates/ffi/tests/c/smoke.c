#include <stdio.h>
#include <string.h>

#include "pixeldoc.h"

int main(void) {
    PdDocument *doc = NULL;
    if (pd_render_text("hello pixel world", 0, 1, 96, 7, &doc) != PD_STATUS_OK) {
        fprintf(stderr, "render failed: %s\n", pd_last_error_message());
        return 1;
    }
    size_t n = 0;
    const uint8_t *px = pd_document_pixels(doc, &n);
    if (px == NULL || n != pd_document_width(doc) * pd_document_height(doc) * 3) return 2;
    if (strcmp(pd_document_text(doc), "hello pixel\nworld") != 0) return 3;

    PdWordBox box;
    const char *word = NULL;
    if (pd_document_word(doc, 2, &box, &word) != PD_STATUS_OK || strcmp(word, "world") != 0) return 4;
    if (pd_document_word(doc, 9, &box, NULL) != PD_STATUS_INVALID_ARGUMENT) return 5;
    if (strlen(pd_last_error_message()) == 0) return 6;

    PdGrid grid;
    if (pd_choose_grid(896, 896, 4096, &grid) != PD_STATUS_OK || grid.rows != 64 || grid.cols != 64) return 7;

    double score = 0.0;
    const char *golds[] = {"piano"};
    if (pd_anls("pianos", golds, 1, &score) != PD_STATUS_OK || score < 0.83 || score > 0.84) return 8;

    uint8_t *ppm = NULL;
    size_t len = 0;
    if (pd_encode_ppm(doc, &ppm, &len) != PD_STATUS_OK || memcmp(ppm, "P6\n", 3) != 0) return 9;
    pd_bytes_free(ppm, len);
    pd_document_free(doc);
    printf("ok\n");
    return 0;
}
